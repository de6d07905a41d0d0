//! Two-hidden-layer rectifier network with a softmax head.
//!
//! Parameters are `f64`. The model file is JSON and round-trips bit-exactly,
//! so a reloaded model predicts exactly what the trained one did.

mod metrics;
mod train;

pub use metrics::{evaluate, metrics_from_confusion, EvalReport, Timers};
pub use train::{stratified_split, train, EarlyStopping, StopDecision};

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simlab::FeatureMatrix;
use crate::util::atomic_write;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_sizes: Vec<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![100, 50],
            max_epochs: 200,
            patience: 3,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam parameters out of range");
        }
        Ok(())
    }
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    /// He-style uniform init: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias.
    fn he_uniform(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / inputs as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self { inputs, outputs, weights, biases: vec![0.0; outputs] }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(s + self.biases[o]);
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// Per-column affine map fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(width: usize) -> Self {
        Self { mean: vec![0.0; width], scale: vec![1.0; width] }
    }

    /// Zero-variance columns are centered but left unscaled.
    pub fn fit(rows: &[&[f64]]) -> Self {
        let width = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var.iter().map(|s| (s / n).sqrt()).map(|sd| if sd > 0.0 { sd } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShallowNet {
    pub config: NetConfig,
    pub num_classes: usize,
    pub standardizer: Standardizer,
    pub layers: Vec<Dense>,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were restored (0 if never trained).
    pub best_epoch: usize,
    /// Last epoch that ran.
    pub stopped_epoch: usize,
    #[serde(skip)]
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    /// One probability row per example.
    pub probabilities: Vec<Vec<f64>>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Index of the largest entry; ties go to the earliest.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `-ln p` with the probability floored away from zero.
fn cross_entropy(p: f64) -> f64 {
    -(p.max(1e-300)).ln()
}

impl ShallowNet {
    /// Freshly initialized network with an identity standardizer.
    pub fn init(input_dim: usize, num_classes: usize, config: NetConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument("input width and class count must be >= 1".into()));
        }
        let mut widths = vec![input_dim];
        widths.extend(&config.hidden_sizes);
        widths.push(num_classes);
        let layers = widths.windows(2).map(|w| Dense::he_uniform(w[0], w[1], rng)).collect();
        Ok(Self {
            config,
            num_classes,
            standardizer: Standardizer::identity(input_dim),
            layers,
            log: vec![],
            best_epoch: 0,
            stopped_epoch: 0,
            train_seconds: 0.0,
        })
    }

    /// Builds a network from explicit layers (checked to chain).
    pub fn from_layers(layers: Vec<Dense>, config: NetConfig) -> Result<Self> {
        let input = layers.first().map(|l| l.inputs).unwrap_or(0);
        let num_classes = layers.last().map(|l| l.outputs).unwrap_or(0);
        let net = Self {
            config,
            num_classes,
            standardizer: Standardizer::identity(input),
            layers,
            log: vec![],
            best_epoch: 0,
            stopped_epoch: 0,
            train_seconds: 0.0,
        };
        net.check()?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for l in &self.layers {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::InvalidArgument("layer parameter count does not match its shape".into()));
            }
        }
        if self.layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return Err(Error::InvalidArgument("layer widths do not chain".into()));
        }
        if self.layers.last().unwrap().outputs != self.num_classes {
            return Err(Error::InvalidArgument("output width differs from class count".into()));
        }
        let d = self.input_dim();
        if self.standardizer.mean.len() != d || self.standardizer.scale.len() != d {
            return Err(Error::InvalidArgument("standardizer width differs from input width".into()));
        }
        if self.layers.iter().flat_map(|l| l.params()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Logits for an already standardized input; also returns every
    /// pre-activation when `trace` is set.
    fn forward(&self, x: &[f64], trace: Option<&mut Vec<Vec<f64>>>) -> Vec<f64> {
        let mut act = x.to_vec();
        let mut pre = Vec::new();
        let last = self.layers.len() - 1;
        let mut pres = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&act, &mut pre);
            if trace.is_some() {
                pres.push(pre.clone());
            }
            act = if i == last { pre.clone() } else { pre.iter().map(|&v| v.max(0.0)).collect() };
        }
        if let Some(t) = trace {
            *t = pres;
        }
        act
    }

    /// Class probabilities for a raw (unstandardized) feature row.
    pub fn probabilities(&self, raw: &[f64]) -> Vec<f64> {
        softmax(&self.forward(&self.standardizer.apply(raw), None))
    }

    /// Mean cross-entropy and its gradient over standardized inputs `xs`.
    ///
    /// Rectifier derivative at exactly 0 is 0.
    pub fn loss_and_gradients(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<Dense>) {
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let inv_b = 1.0 / xs.len() as f64;
        let mut loss = 0.0;
        let mut pres = Vec::new();
        for (x, &y) in xs.iter().zip(ys) {
            let logits = self.forward(x, Some(&mut pres));
            let p = softmax(&logits);
            loss += cross_entropy(p[y]);
            let mut delta: Vec<f64> = p.iter().enumerate().map(|(k, &pk)| (pk - (k == y) as u8 as f64) * inv_b).collect();
            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let input: Vec<f64> = if l == 0 { x.to_vec() } else { pres[l - 1].iter().map(|&v| v.max(0.0)).collect() };
                let g = &mut grads[l];
                for o in 0..layer.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, a) in row.iter_mut().zip(&input) {
                        *w += d * a;
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (pv, w) in prev.iter_mut().zip(row) {
                            *pv += w * d;
                        }
                    }
                    for (pv, z) in prev.iter_mut().zip(&pres[l - 1]) {
                        if *z <= 0.0 {
                            *pv = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        (loss * inv_b, grads)
    }

    pub(crate) fn mean_loss(&self, xs: &[&[f64]], ys: &[usize]) -> f64 {
        let total: f64 = xs.iter().zip(ys).map(|(x, &y)| cross_entropy(softmax(&self.forward(x, None))[y])).sum();
        total / xs.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s).map_err(|e| Error::InvalidArgument(format!("model json: {e}")))?;
        net.check()?;
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s).map_err(|e| Error::decode(path, e.to_string()))
    }
}

/// Class probabilities and argmax labels (earliest class wins ties).
pub fn predict(net: &ShallowNet, features: &FeatureMatrix) -> Result<Prediction> {
    if features.ncols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "feature width {} does not match model input width {}",
            features.ncols(),
            net.input_dim()
        )));
    }
    let probabilities: Vec<Vec<f64>> =
        (0..features.nrows()).into_par_iter().map(|i| net.probabilities(&features.row(i))).collect();
    let labels = probabilities.iter().map(|p| argmax(p)).collect();
    Ok(Prediction { labels, probabilities })
}

/// Largest relative difference between the analytic gradient and central
/// finite differences (`h = 1e-5`) over every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(net: &ShallowNet, features: &FeatureMatrix, labels: &[usize]) -> Result<f64> {
    if features.ncols() != net.input_dim() || features.nrows() != labels.len() {
        return Err(Error::Shape("features/labels do not match the network".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= net.num_classes) {
        return Err(Error::InvalidArgument(format!("label {l} out of range")));
    }
    let rows: Vec<Vec<f64>> = (0..features.nrows()).map(|i| net.standardizer.apply(&features.row(i))).collect();
    let xs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let (_, grads) = net.loss_and_gradients(&xs, labels);
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.params().copied()).collect();

    const H: f64 = 1e-5;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let count = net.parameter_count();
    for k in 0..count {
        let orig = *probe.layers.iter_mut().flat_map(|l| l.params_mut()).nth(k).unwrap();
        let set = |probe: &mut ShallowNet, v: f64| {
            *probe.layers.iter_mut().flat_map(|l| l.params_mut()).nth(k).unwrap() = v;
        };
        set(&mut probe, orig + H);
        let up = probe.mean_loss(&xs, labels);
        set(&mut probe, orig - H);
        let down = probe.mean_loss(&xs, labels);
        set(&mut probe, orig);
        let numeric = (up - down) / (2.0 * H);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
