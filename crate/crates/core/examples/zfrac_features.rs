//! Multi-scale ZFrac vectors next to the Prewitt edge baseline.
//!
//!     cargo run --example zfrac_features

use zfrac::features::{extract_prewitt, PrewittKind};
use zfrac::synth::{defect_texture, grid_to_image, sierpinski_triangle};
use zfrac::{extract_zfrac, ExtractConfig, Threshold, WindowSchedule};

fn main() -> zfrac::Result<()> {
    let schedule = WindowSchedule::new(vec![4, 8, 16, 32])?;
    let images = [
        ("triangle", grid_to_image(&sierpinski_triangle(6), 255, 0)),
        ("clean texture", defect_texture(64, false, 5)),
        ("defect texture", defect_texture(64, true, 5)),
    ];
    for (name, img) in &images {
        let v = extract_zfrac(img, &schedule, &ExtractConfig::default())?;
        println!("{name}: {} values, threshold {}", v.values.len(), v.meta.threshold);
        for (i, &(w, per_side)) in v.layout.iter().enumerate() {
            let level = v.level(i);
            let mean = level.iter().sum::<f64>() / level.len() as f64;
            let max = level.iter().cloned().fold(f64::MIN, f64::max);
            println!("  w={w:<3} {per_side}x{per_side} blocks  mean fd {mean:.3}  max {max:.3}");
        }
    }

    // a fixed threshold makes a filled image fully occupied
    let white = zfrac::GrayImage::filled(4, 4, 255)?;
    let cfg = ExtractConfig { threshold: Threshold::Fixed(128), ..Default::default() };
    let v = extract_zfrac(&white, &WindowSchedule::new(vec![2])?, &cfg)?;
    println!("filled 4x4, w=2: {:?}", v.values);

    for kind in [PrewittKind::Horizontal, PrewittKind::Vertical] {
        let b = extract_prewitt(&images[2].1, kind)?;
        let mean = b.values.iter().map(|v| v.abs()).sum::<f64>() / b.values.len() as f64;
        println!("prewitt {kind:?}: {} values, mean |response| {mean:.2}", b.values.len());
    }
    Ok(())
}
