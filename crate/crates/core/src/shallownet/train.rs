use std::time::Instant;

use rand::seq::SliceRandom;

use super::{Dense, EpochLog, NetConfig, ShallowNet, Standardizer};
use crate::error::{Error, Result};
use crate::simlab::FeatureMatrix;
use crate::synth::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    /// Strictly better than every earlier epoch.
    Improved,
    Plateau,
    Stop,
}

/// Validation-loss early stopping: stop after `patience` consecutive epochs
/// without strict improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    bad_epochs: usize,
    epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0, bad_epochs: 0, epoch: 0 }
    }

    pub fn observe(&mut self, val_loss: f64) -> StopDecision {
        self.epoch += 1;
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.bad_epochs = 0;
            StopDecision::Improved
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Plateau
            }
        }
    }

    /// 1-based epoch of the best loss seen so far.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Seeded per-class split into `(train, val)` index lists, each sorted.
///
/// Every class with at least two examples contributes at least one
/// validation and one training example.
pub fn stratified_split(labels: &[usize], val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng(seed);
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut r);
        let n = idx.len();
        let k = if n >= 2 { ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1) } else { 0 };
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(layers: &[Dense]) -> Self {
        let sizes: Vec<usize> = layers.iter().map(|l| l.weights.len() + l.biases.len()).collect();
        Self {
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, layers: &mut [Dense], grads: &[Dense], cfg: &NetConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (l, (layer, g)) in layers.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[l], &mut self.v[l]);
            for (k, (p, gk)) in layer.params_mut().zip(g.params()).enumerate() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Trains with mini-batch Adam on a seeded stratified train/val split,
/// stopping on a validation plateau and restoring the best epoch.
///
/// Columns are standardized with train-split statistics, which are stored
/// in the returned model.
pub fn train(features: &FeatureMatrix, labels: &[usize], cfg: &NetConfig) -> Result<ShallowNet> {
    cfg.validate()?;
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows but {} labels", features.nrows(), labels.len())));
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    let (train_idx, val_idx) = stratified_split(labels, cfg.val_fraction, cfg.seed);
    if train_idx.len() < 2 || val_idx.len() < 2 {
        return Err(Error::DegenerateSplit(format!(
            "{} train / {} validation examples (need >= 2 each)",
            train_idx.len(),
            val_idx.len()
        )));
    }

    let start = Instant::now();
    let raw: Vec<Vec<f64>> = (0..features.nrows()).map(|i| features.row(i)).collect();
    let train_raw: Vec<&[f64]> = train_idx.iter().map(|&i| raw[i].as_slice()).collect();
    let standardizer = Standardizer::fit(&train_raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();

    let mut r = rng(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut net = ShallowNet::init(features.ncols(), num_classes, cfg.clone(), &mut r)?;
    net.standardizer = standardizer;

    let val_x: Vec<&[f64]> = val_idx.iter().map(|&i| rows[i].as_slice()).collect();
    let val_y: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut adam = Adam::new(&net.layers);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_layers = net.layers.clone();
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut r);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grads) = net.loss_and_gradients(&xs, &ys);
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut net.layers, &grads, cfg);
        }
        let train_loss = loss_sum / order.len() as f64;
        let val_loss = net.mean_loss(&val_x, &val_y);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        net.log.push(EpochLog { epoch, train_loss, val_loss });
        net.stopped_epoch = epoch;
        match stopper.observe(val_loss) {
            StopDecision::Improved => best_layers.clone_from(&net.layers),
            StopDecision::Plateau => {}
            StopDecision::Stop => break,
        }
    }
    net.layers = best_layers;
    net.best_epoch = stopper.best_epoch();
    net.train_seconds = start.elapsed().as_secs_f64();
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shallownet::predict;
    use crate::synth::{gaussian_blobs, noisy_xor};

    fn accuracy(net: &ShallowNet, x: &FeatureMatrix, y: &[usize]) -> f64 {
        let p = predict(net, x).unwrap();
        p.labels.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn early_stopping_plateau_trace() {
        let trace = [1.0, 0.9, 0.8, 0.8, 0.85, 0.81];
        let mut s = EarlyStopping::new(3);
        let decisions: Vec<_> = trace.iter().map(|&v| s.observe(v)).collect();
        use StopDecision::*;
        assert_eq!(decisions, vec![Improved, Improved, Improved, Plateau, Plateau, Stop]);
        assert_eq!(s.best_epoch(), 3);
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<usize> = (0..40).map(|i| (i % 4 == 0) as usize).collect();
        let (t, v) = stratified_split(&labels, 0.1, 3);
        assert_eq!(t.len() + v.len(), 40);
        assert_eq!(v.iter().filter(|&&i| labels[i] == 1).count(), 1);
        assert_eq!(v.iter().filter(|&&i| labels[i] == 0).count(), 3);
        assert_eq!((t.clone(), v.clone()), stratified_split(&labels, 0.1, 3));
    }

    #[test]
    fn degenerate_split_rejected() {
        let x = FeatureMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let err = train(&x, &[0, 0, 1], &NetConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateSplit(_)));
    }

    #[test]
    fn blobs_are_learned() {
        let (xs, ys) = gaussian_blobs(200, 7);
        let x = FeatureMatrix::from_rows(&xs).unwrap();
        let net = train(&x, &ys, &NetConfig { seed: 7, ..Default::default() }).unwrap();
        assert_eq!(accuracy(&net, &x, &ys), 1.0);
    }

    #[test]
    fn xor_is_learned() {
        let (xs, ys) = noisy_xor(50, 0.1, 3);
        let x = FeatureMatrix::from_rows(&xs).unwrap();
        let cfg = NetConfig { seed: 3, learning_rate: 1e-2, ..Default::default() };
        let net = train(&x, &ys, &cfg).unwrap();
        assert!(accuracy(&net, &x, &ys) > 0.95);
    }

    #[test]
    fn constant_label() {
        let (xs, _) = gaussian_blobs(30, 1);
        let ys = vec![0usize; 30];
        let x = FeatureMatrix::from_rows(&xs).unwrap();
        let net = train(&x, &ys, &NetConfig::default()).unwrap();
        assert_eq!(accuracy(&net, &x, &ys), 1.0);
    }

    #[test]
    fn restored_epoch_is_best() {
        let (xs, ys) = noisy_xor(20, 0.3, 9);
        let x = FeatureMatrix::from_rows(&xs).unwrap();
        let net = train(&x, &ys, &NetConfig { seed: 9, max_epochs: 60, ..Default::default() }).unwrap();
        assert!(net.stopped_epoch <= 60);
        let best = net.log[net.best_epoch - 1].val_loss;
        assert!(net.log[net.best_epoch..].iter().all(|e| e.val_loss >= best));
    }
}
