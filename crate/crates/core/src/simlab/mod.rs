//! Similarity between representations of the same `n` inputs.
//!
//! A representation is an `n`×`p` matrix whose row `i` is the response to
//! input `i`: either fractal features ([`FeatureMatrix`]) or a recorded layer
//! ([`ActivationMatrix`]). Every metric here only needs the two matrices to
//! share `n`.

mod actm;
mod cca;
mod kernel;
mod rank;
mod sweep;

pub use actm::{decode_actm, encode_actm, load_dump, read_actm, write_actm, ACTM_VERSION};
pub use cca::{cca, CcaResult};
pub use kernel::{cka, cka_with, gram, hsic, hsic_unbiased, HsicEstimator, KernelConfig, KernelKind};
pub use rank::{kendall, pearson, rank_correlations, spearman, Aggregate, RankOptions, RankReport};
pub use sweep::{layer_sweep, LayerScore, Metric, MetricSummary, SimilarityReport, SweepOptions};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Anything that exposes an `n`×`p` representation matrix.
pub trait Representation {
    fn matrix(&self) -> &DMatrix<f64>;

    fn n(&self) -> usize {
        self.matrix().nrows()
    }
}

impl Representation for DMatrix<f64> {
    fn matrix(&self) -> &DMatrix<f64> {
        self
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} contains non-finite entries")));
    }
    Ok(())
}

/// Fractal (or baseline) features, one row per input.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    values: DMatrix<f64>,
}

impl FeatureMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Shape(format!("feature matrix {}x{} is empty", values.nrows(), values.ncols())));
        }
        check_finite(&values, "feature matrix")?;
        Ok(Self { values })
    }

    pub fn from_row_major(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * p {
            return Err(Error::Shape(format!("{} values for {n}x{p}", data.len())));
        }
        Self::new(DMatrix::from_row_slice(n, p, &data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::from_row_major(rows.len(), p, rows.concat())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }
}

impl Representation for FeatureMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Responses of one network layer over `n` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMatrix {
    layer_name: String,
    values: DMatrix<f64>,
}

impl ActivationMatrix {
    pub fn new(layer_name: impl Into<String>, values: DMatrix<f64>) -> Result<Self> {
        let layer_name = layer_name.into();
        if values.nrows() < 2 || values.ncols() == 0 {
            return Err(Error::Shape(format!(
                "layer {layer_name}: activation matrix {}x{} needs n >= 2 and p >= 1",
                values.nrows(),
                values.ncols()
            )));
        }
        check_finite(&values, &format!("layer {layer_name}"))?;
        Ok(Self { layer_name, values })
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
}

impl Representation for ActivationMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// Percentage of positions where two prediction vectors agree.
pub fn agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::Shape(format!("prediction lengths {} and {} (need equal, >= 1)", a.len(), b.len())));
    }
    let same = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(100.0 * same as f64 / a.len() as f64)
}

/// Subtracts each column's mean.
pub(crate) fn center_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    out
}
