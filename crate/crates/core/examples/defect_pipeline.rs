//! End to end: synthesize a textured-surface dataset with planted fractal
//! defects, extract ZFrac features, train the classifier and score the
//! held-out split.
//!
//!     cargo run --release --example defect_pipeline -- [count] [side] [seed]

use std::time::Instant;

use zfrac::features::batch_extract;
use zfrac::imagio::{load_manifest, manifest_to_csv, Split};
use zfrac::shallownet::{evaluate, train, NetConfig, Timers};
use zfrac::synth::write_defect_dataset;
use zfrac::{ExtractConfig, WindowSchedule};

fn main() -> zfrac::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let count = args.first().copied().unwrap_or(400);
    let side = args.get(1).copied().unwrap_or(128);
    let seed = args.get(2).copied().unwrap_or(11) as u64;

    let dir = tempfile::tempdir().expect("temp dir");
    let entries = write_defect_dataset(dir.path(), count, side, 0.1, 0.2, seed)?;
    let manifest_path = dir.path().join("manifest.csv");
    std::fs::write(&manifest_path, manifest_to_csv(&entries)).expect("write manifest");
    let manifest = load_manifest(&manifest_path)?;

    let schedule = WindowSchedule::new(vec![2, 4, 8, 16])?;
    let t = Instant::now();
    let out = batch_extract(&manifest, &schedule, &ExtractConfig::default(), 4, None)?;
    println!("extracted {count} images in {:.2}s", t.elapsed().as_secs_f64());

    let train_set = &out.splits[&Split::Train];
    let test_set = &out.splits[&Split::Test];
    let cfg = NetConfig { seed, ..Default::default() };
    let net = train(&train_set.to_feature_matrix()?, &train_set.class_labels()?, &cfg)?;
    println!("trained {} epochs (best {}) in {:.2}s", net.stopped_epoch, net.best_epoch, net.train_seconds);

    let report = evaluate(&net, &test_set.to_feature_matrix()?, &test_set.class_labels()?, Timers {
        train_seconds: net.train_seconds,
    })?;
    println!("test accuracy {:.4}  f1 {:.4}", report.accuracy, report.f1);
    println!("confusion {:?}", report.confusion);
    Ok(())
}
