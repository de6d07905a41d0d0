use nalgebra::DMatrix;

use super::{center_columns, Representation};
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are dropped.
const RANK_TOL: f64 = 1e-6;
/// Ridge on the covariance when mapping canonical directions back to input
/// columns.
const RIDGE: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct CcaResult {
    /// Non-increasing, each in `[0, 1]`.
    pub canonical_correlations: Vec<f64>,
    pub mean_score: f64,
    /// `p₁ × m` projection; canonical variates of `Z` are `Zc · w_z`.
    pub w_z: DMatrix<f64>,
    /// `p₂ × m` projection for `Y`.
    pub w_y: DMatrix<f64>,
}

struct Whitened {
    /// Left singular vectors of the centered data, kept directions only.
    u: DMatrix<f64>,
    /// Maps kept directions back to input columns: `V · diag(1/sqrt(s²/(n-1) + ε))`.
    back: DMatrix<f64>,
}

fn whiten(x: &DMatrix<f64>, side: &str) -> Result<Whitened> {
    let n1 = (x.nrows() - 1) as f64;
    let xc = center_columns(x);
    let svd = xc.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Internal("svd did not produce singular vectors".into())),
    };
    let s = svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let mut keep: Vec<usize> = (0..s.len()).filter(|&i| smax > 0.0 && s[i] > RANK_TOL * smax).collect();
    if keep.is_empty() {
        return Err(Error::UndefinedSimilarity(format!("{side} has effective rank 0")));
    }
    keep.sort_by(|&a, &b| s[b].total_cmp(&s[a]));

    let k = keep.len();
    let mut uk = DMatrix::zeros(x.nrows(), k);
    let mut back = DMatrix::zeros(x.ncols(), k);
    for (c, &i) in keep.iter().enumerate() {
        uk.set_column(c, &u.column(i));
        let si = s[i];
        let inv_sd = 1.0 / (si * si / n1 + RIDGE).sqrt();
        back.set_column(c, &(vt.row(i).transpose() * inv_sd));
    }
    Ok(Whitened { u: uk, back })
}

/// Canonical correlation analysis through SVD whitening.
///
/// Both inputs are column-centered; directions with singular value below
/// `1e-6 ×` the largest are dropped. The canonical correlations are the
/// singular values of the whitened cross-covariance, so they are invariant
/// to invertible affine maps. The `1e-6` ridge only enters the returned
/// projections.
pub fn cca(z: &impl Representation, y: &impl Representation) -> Result<CcaResult> {
    let (zm, ym) = (z.matrix(), y.matrix());
    if zm.nrows() != ym.nrows() {
        return Err(Error::Shape(format!("row counts differ: {} vs {}", zm.nrows(), ym.nrows())));
    }
    if zm.nrows() < 3 {
        return Err(Error::Shape(format!("cca needs n >= 3, got {}", zm.nrows())));
    }
    let wz = whiten(zm, "Z")?;
    let wy = whiten(ym, "Y")?;

    let cross = wz.u.transpose() * &wy.u;
    let svd = cross.svd(true, true);
    let (a, bt) = match (svd.u, svd.v_t) {
        (Some(a), Some(bt)) => (a, bt),
        _ => return Err(Error::Internal("svd did not produce singular vectors".into())),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let m = order.len();
    let mut rho = Vec::with_capacity(m);
    let mut a_sorted = DMatrix::zeros(a.nrows(), m);
    let mut b_sorted = DMatrix::zeros(bt.ncols(), m);
    for (c, &i) in order.iter().enumerate() {
        let v = svd.singular_values[i];
        rho.push(if v > 1.0 && v < 1.0 + 1e-8 { 1.0 } else { v });
        a_sorted.set_column(c, &a.column(i));
        b_sorted.set_column(c, &bt.row(i).transpose());
    }
    let mean_score = rho.iter().sum::<f64>() / m as f64;
    Ok(CcaResult {
        canonical_correlations: rho,
        mean_score,
        w_z: &wz.back * a_sorted,
        w_y: &wy.back * b_sorted,
    })
}
