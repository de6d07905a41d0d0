use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cca, cka, rank_correlations, ActivationMatrix, KernelConfig, RankOptions, RankReport, Representation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    CkaLinear,
    CkaRbf { alpha: f64 },
    Cca,
    Pearson,
    Spearman,
    Kendall,
}

impl Metric {
    fn is_rank(self) -> bool {
        matches!(self, Metric::Pearson | Metric::Spearman | Metric::Kendall)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::CkaLinear => f.write_str("cka-linear"),
            Metric::CkaRbf { alpha } => write!(f, "cka-rbf:{alpha}"),
            Metric::Cca => f.write_str("cca"),
            Metric::Pearson => f.write_str("pearson"),
            Metric::Spearman => f.write_str("spearman"),
            Metric::Kendall => f.write_str("kendall"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cka-linear" => Metric::CkaLinear,
            "cca" => Metric::Cca,
            "pearson" => Metric::Pearson,
            "spearman" => Metric::Spearman,
            "kendall" => Metric::Kendall,
            "cka-rbf" => Metric::CkaRbf { alpha: 1.0 },
            _ => {
                let alpha = s
                    .strip_prefix("cka-rbf:")
                    .and_then(|a| a.parse::<f64>().ok())
                    .filter(|a| *a > 0.0)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))?;
                Metric::CkaRbf { alpha }
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub layer_index: usize,
    pub layer_name: String,
    pub metric: Metric,
    /// `None` when the metric is undefined for this layer.
    pub score: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    /// Earliest layer attaining the maximum; `None` if every layer was skipped.
    pub argmax_layer: Option<usize>,
    pub argmax_name: Option<String>,
    pub max_score: Option<f64>,
    pub skipped_layers: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub per_layer: Vec<LayerScore>,
    pub summary: Vec<MetricSummary>,
    pub rank_options: RankOptions,
}

impl SimilarityReport {
    pub fn summary_for(&self, metric: Metric) -> Option<&MetricSummary> {
        self.summary.iter().find(|s| s.metric == metric)
    }

    /// `layer,metric,score` rows followed by a `# summary` block.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,metric,score\n");
        for e in &self.per_layer {
            let score = e.score.map_or_else(|| "skipped".to_string(), |s| format!("{s:.10}"));
            out.push_str(&format!("{},{},{}\n", e.layer_name, e.metric, score));
        }
        out.push_str("# summary\nmetric,argmax_layer,max_score,skipped_layers\n");
        for s in &self.summary {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.metric,
                s.argmax_name.as_deref().unwrap_or("none"),
                s.max_score.map_or_else(|| "none".to_string(), |v| format!("{v:.10}")),
                s.skipped_layers
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub metrics: Vec<Metric>,
    pub rank: RankOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { metrics: vec![Metric::CkaLinear, Metric::Cca], rank: RankOptions::default() }
    }
}

fn eval_layer(z: &impl Representation, layer: &ActivationMatrix, opts: &SweepOptions) -> Vec<(Metric, Result<f64>)> {
    let ranks: Option<Result<RankReport>> =
        opts.metrics.iter().any(|m| m.is_rank()).then(|| rank_correlations(z, layer, &opts.rank));
    let from_rank = |pick: fn(&RankReport) -> Option<f64>| -> Result<f64> {
        match ranks.as_ref().expect("rank report computed") {
            Ok(r) => pick(r).ok_or_else(|| Error::UndefinedSimilarity("no column pair with variance".into())),
            Err(e) => Err(Error::UndefinedSimilarity(e.to_string())),
        }
    };
    opts.metrics
        .iter()
        .map(|&m| {
            let v = match m {
                Metric::CkaLinear => cka(z, layer, &KernelConfig::linear()),
                Metric::CkaRbf { alpha } => cka(z, layer, &KernelConfig::rbf(alpha)),
                Metric::Cca => cca(z, layer).map(|r| r.mean_score),
                Metric::Pearson => from_rank(|r| r.pearson),
                Metric::Spearman => from_rank(|r| r.spearman),
                Metric::Kendall => from_rank(|r| r.kendall),
            };
            (m, v)
        })
        .collect()
}

/// Scores `z` against every layer for every requested metric.
///
/// Layers are evaluated concurrently; the report keeps input order and
/// resolves argmax ties to the earliest layer.
pub fn layer_sweep(z: &impl Representation, layers: &[ActivationMatrix], opts: &SweepOptions) -> Result<SimilarityReport> {
    layer_sweep_inner(z.matrix(), layers, opts)
}

fn layer_sweep_inner(z: &nalgebra::DMatrix<f64>, layers: &[ActivationMatrix], opts: &SweepOptions) -> Result<SimilarityReport> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("layer list is empty".into()));
    }
    if opts.metrics.is_empty() {
        return Err(Error::InvalidArgument("no metrics requested".into()));
    }
    if let Some(l) = layers.iter().find(|l| l.n() != z.nrows()) {
        return Err(Error::Shape(format!(
            "layer {} has n = {} but features have n = {}",
            l.layer_name(),
            l.n(),
            z.nrows()
        )));
    }

    let results: Vec<Vec<(Metric, Result<f64>)>> = layers.par_iter().map(|l| eval_layer(z, l, opts)).collect();

    let mut per_layer = Vec::new();
    for (i, (layer, res)) in layers.iter().zip(results).enumerate() {
        for (metric, r) in res {
            let (score, note) = match r {
                Ok(v) => (Some(v), None),
                Err(e @ (Error::UndefinedSimilarity(_) | Error::Shape(_))) => (None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            per_layer.push(LayerScore { layer_index: i, layer_name: layer.layer_name().to_string(), metric, score, note });
        }
    }

    let summary = opts
        .metrics
        .iter()
        .map(|&metric| {
            let mut best: Option<(usize, f64)> = None;
            let mut skipped = 0;
            for e in per_layer.iter().filter(|e| e.metric == metric) {
                match e.score {
                    Some(s) if best.is_none_or(|(_, b)| s > b) => best = Some((e.layer_index, s)),
                    Some(_) => {}
                    None => skipped += 1,
                }
            }
            MetricSummary {
                metric,
                argmax_layer: best.map(|b| b.0),
                argmax_name: best.map(|b| layers[b.0].layer_name().to_string()),
                max_score: best.map(|b| b.1),
                skipped_layers: skipped,
            }
        })
        .collect();

    Ok(SimilarityReport { per_layer, summary, rank_options: opts.rank.clone() })
}
