//! Writes and re-reads the binary feature table and activation formats, and
//! compares two prediction vectors.
//!
//!     cargo run --example formats_and_agreement

use zfrac::simlab::{agreement, decode_actm, encode_actm};
use zfrac::synth::random_matrix;
use zfrac::{ActivationMatrix, FeatureTable};

fn main() -> zfrac::Result<()> {
    let table = FeatureTable::new(vec![2, 4], 3, vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0], vec![0, 1])?;
    let bytes = table.to_bytes();
    println!("feature table: {} bytes, magic {:?}", bytes.len(), std::str::from_utf8(&bytes[..4]).unwrap());
    assert_eq!(FeatureTable::from_bytes(&bytes).expect("decodes"), table);
    print!("{}", table.to_csv());

    let layer = ActivationMatrix::new("conv1", random_matrix(4, 3, 9))?;
    let enc = encode_actm(&layer);
    let back = decode_actm(&enc).expect("decodes");
    println!("activation '{}': {} bytes, {}x{}", back.layer_name(), enc.len(), back.values().nrows(), back.values().ncols());

    let a = [0, 1, 1, 0, 1, 0, 0, 1];
    let b = [0, 1, 0, 0, 1, 0, 1, 1];
    println!("agreement {:.1}%", agreement(&a, &b)?);
    Ok(())
}
