//! Trains the two-hidden-layer classifier on noisy XOR, saves it, reloads it
//! and evaluates, with a finite-difference gradient check first.
//!
//!     cargo run --release --example shallow_classifier

use zfrac::shallownet::{evaluate, gradient_check, train, NetConfig, ShallowNet, Timers};
use zfrac::synth::{noisy_xor, rng};
use zfrac::FeatureMatrix;

fn main() -> zfrac::Result<()> {
    let (xs, ys) = noisy_xor(100, 0.15, 2);
    let x = FeatureMatrix::from_rows(&xs)?;

    let probe = ShallowNet::init(2, 2, NetConfig { hidden_sizes: vec![8, 4], ..Default::default() }, &mut rng(0))?;
    let small = FeatureMatrix::from_rows(&xs[..8])?;
    println!("gradient check max relative error {:.2e}", gradient_check(&probe, &small, &ys[..8])?);

    let cfg = NetConfig { learning_rate: 1e-2, seed: 2, ..Default::default() };
    let net = train(&x, &ys, &cfg)?;
    for e in &net.log {
        println!("epoch {:>3}  train {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_loss);
    }
    println!("best epoch {} of {}", net.best_epoch, net.stopped_epoch);

    let path = std::env::temp_dir().join("zfrac-xor-model.json");
    net.save(&path)?;
    let reloaded = ShallowNet::load(&path)?;
    let report = evaluate(&reloaded, &x, &ys, Timers { train_seconds: net.train_seconds })?;
    println!("accuracy {:.4}  f1 {:.4}  saved to {}", report.accuracy, report.f1, path.display());
    Ok(())
}
