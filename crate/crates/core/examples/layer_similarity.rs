//! Which layer of a network dump looks most like a feature table?
//!
//! Without arguments a synthetic dump is built with the signal planted in
//! one layer. With `<features.zft> <activations-dir>` a real pair is scored.
//!
//!     cargo run --release --example layer_similarity -- [features.zft dump/]

use zfrac::simlab::{layer_sweep, load_dump, Metric, SweepOptions};
use zfrac::synth::{planted_layers, random_matrix};
use zfrac::{FeatureMatrix, FeatureTable};

fn main() -> zfrac::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (z, layers) = if let [features, dump] = args.as_slice() {
        (FeatureTable::read(features)?.to_feature_matrix()?, load_dump(dump)?)
    } else {
        let z = random_matrix(120, 6, 1);
        let layers = planted_layers(&z, 6, 4, 0.1, 1);
        (FeatureMatrix::new(z)?, layers)
    };

    let opts = SweepOptions {
        metrics: vec![Metric::CkaLinear, Metric::CkaRbf { alpha: 1.0 }, Metric::Cca, Metric::Spearman],
        ..Default::default()
    };
    let report = layer_sweep(&z, &layers, &opts)?;
    for s in &report.per_layer {
        let score = s.score.map_or("skipped".to_string(), |v| format!("{v:.4}"));
        println!("{:<10} {:<12} {score}", s.layer_name, s.metric.to_string());
    }
    for s in &report.summary {
        println!("{}: best layer {:?}", s.metric, s.argmax_name);
    }
    Ok(())
}
