use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{predict, ShallowNet};
use crate::error::{Error, Result};
use crate::simlab::FeatureMatrix;

/// Externally measured timings folded into the report.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timers {
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Positive-class (label 1) F1 for two classes, macro F1 otherwise.
    pub f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub train_seconds: f64,
    pub mean_inference_seconds: f64,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        out.push_str(&format!("accuracy,{}\n", self.accuracy));
        out.push_str(&format!("f1,{}\n", self.f1));
        out.push_str(&format!("train_seconds,{}\n", self.train_seconds));
        out.push_str(&format!("mean_inference_seconds,{}\n", self.mean_inference_seconds));
        out.push_str(&format!("examples,{}\n", self.predictions.len()));
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, c) in row.iter().enumerate() {
                out.push_str(&format!("confusion_{t}_{p},{c}\n"));
            }
        }
        out
    }
}

fn f1_for(confusion: &[Vec<u64>], class: usize) -> f64 {
    let tp = confusion[class][class];
    let fp: u64 = (0..confusion.len()).filter(|&t| t != class).map(|t| confusion[t][class]).sum();
    let fn_: u64 = (0..confusion.len()).filter(|&p| p != class).map(|p| confusion[class][p]).sum();
    if tp + fp + fn_ == 0 {
        // class absent from both truth and predictions
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

/// `(accuracy, f1)` from a square confusion matrix.
pub fn metrics_from_confusion(confusion: &[Vec<u64>]) -> (f64, f64) {
    let c = confusion.len();
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..c).map(|i| confusion[i][i]).sum();
    let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    let f1 = if c == 2 { f1_for(confusion, 1) } else { (0..c).map(|k| f1_for(confusion, k)).sum::<f64>() / c as f64 };
    (accuracy, f1)
}

pub fn evaluate(net: &ShallowNet, features: &FeatureMatrix, labels: &[usize], timers: Timers) -> Result<EvalReport> {
    if features.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} feature rows but {} labels", features.nrows(), labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(net.num_classes);
    let start = Instant::now();
    let pred = predict(net, features)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut confusion = vec![vec![0u64; classes]; classes];
    for (&t, &p) in labels.iter().zip(&pred.labels) {
        confusion[t][p] += 1;
    }
    let (accuracy, f1) = metrics_from_confusion(&confusion);
    Ok(EvalReport {
        accuracy,
        f1,
        confusion,
        train_seconds: timers.train_seconds,
        mean_inference_seconds: elapsed / labels.len().max(1) as f64,
        predictions: pred.labels,
    })
}
