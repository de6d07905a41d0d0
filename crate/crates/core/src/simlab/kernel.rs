use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Representation;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    Linear,
    Rbf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// RBF bandwidth as a fraction of the median pairwise distance.
    pub alpha: f64,
}

impl KernelConfig {
    pub fn linear() -> Self {
        Self { kind: KernelKind::Linear, alpha: 1.0 }
    }

    pub fn rbf(alpha: f64) -> Self {
        Self { kind: KernelKind::Rbf, alpha }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HsicEstimator {
    #[default]
    Biased,
    Unbiased,
}

fn squared_distances(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = (x.row(i) - x.row(j)).norm_squared();
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Kernel matrix over the rows of `x`.
///
/// Linear: `X Xᵀ`. RBF: `exp(-d²/(2σ²))` with `σ = alpha × median` of the
/// `n(n-1)/2` pairwise Euclidean distances (mean of the two middle values
/// when their count is even).
pub fn gram(x: &impl Representation, cfg: &KernelConfig) -> Result<DMatrix<f64>> {
    let x = x.matrix();
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Shape(format!("gram needs n >= 2, got {n}")));
    }
    match cfg.kind {
        KernelKind::Linear => Ok(x * x.transpose()),
        KernelKind::Rbf => {
            if !(cfg.alpha > 0.0) {
                return Err(Error::InvalidArgument(format!("rbf alpha must be positive, got {}", cfg.alpha)));
            }
            let d2 = squared_distances(x);
            let mut dists = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    dists.push(d2[(i, j)].sqrt());
                }
            }
            let sigma = cfg.alpha * median(dists);
            if !(sigma > 0.0) {
                return Err(Error::UndefinedSimilarity("rbf median pairwise distance is zero".into()));
            }
            let denom = 2.0 * sigma * sigma;
            Ok(d2.map(|v| (-v / denom).exp()))
        }
    }
}

fn double_center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let n = k.nrows() as f64;
    let row_means: Vec<f64> = k.row_iter().map(|r| r.sum() / n).collect();
    let col_means: Vec<f64> = k.column_iter().map(|c| c.sum() / n).collect();
    let grand = row_means.iter().sum::<f64>() / n;
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand)
}

fn check_pair(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<usize> {
    if !k.is_square() || k.shape() != l.shape() {
        return Err(Error::Shape(format!("kernel shapes {:?} and {:?}", k.shape(), l.shape())));
    }
    Ok(k.nrows())
}

/// Biased HSIC: `trace(HKH · HLH) / (n-1)²` with `H = I - 11ᵀ/n`.
pub fn hsic(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let n = check_pair(k, l)?;
    if n < 2 {
        return Err(Error::Shape("hsic needs n >= 2".into()));
    }
    let kc = double_center(k);
    let lc = double_center(l);
    // trace(A B) for symmetric A, B is the Frobenius inner product
    Ok(kc.dot(&lc) / ((n - 1) * (n - 1)) as f64)
}

/// Unbiased HSIC estimator (needs `n >= 4`).
pub fn hsic_unbiased(k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<f64> {
    let n = check_pair(k, l)?;
    if n < 4 {
        return Err(Error::Shape("unbiased hsic needs n >= 4".into()));
    }
    let mut kt = k.clone();
    let mut lt = l.clone();
    kt.fill_diagonal(0.0);
    lt.fill_diagonal(0.0);
    let nf = n as f64;
    let ones = nalgebra::DVector::from_element(n, 1.0);
    let k1 = &kt * &ones;
    let l1 = &lt * &ones;
    let tr = kt.dot(&lt);
    let sum_k = k1.sum();
    let sum_l = l1.sum();
    let cross = k1.dot(&l1);
    Ok((tr + sum_k * sum_l / ((nf - 1.0) * (nf - 2.0)) - 2.0 / (nf - 2.0) * cross) / (nf * (nf - 3.0)))
}

/// Centered kernel alignment with the biased HSIC estimator.
pub fn cka(z: &impl Representation, y: &impl Representation, cfg: &KernelConfig) -> Result<f64> {
    cka_with(z, y, cfg, HsicEstimator::Biased)
}

/// `HSIC(K,L) / sqrt(HSIC(K,K) · HSIC(L,L))`.
///
/// A representation whose self-HSIC vanishes (e.g. constant rows) makes the
/// index undefined; that is an error, not a zero score.
pub fn cka_with(
    z: &impl Representation,
    y: &impl Representation,
    cfg: &KernelConfig,
    estimator: HsicEstimator,
) -> Result<f64> {
    if z.n() != y.n() {
        return Err(Error::Shape(format!("row counts differ: {} vs {}", z.n(), y.n())));
    }
    let k = gram(z, cfg)?;
    let l = gram(y, cfg)?;
    let h = |a: &DMatrix<f64>, b: &DMatrix<f64>| match estimator {
        HsicEstimator::Biased => hsic(a, b),
        HsicEstimator::Unbiased => hsic_unbiased(a, b),
    };
    let kk = h(&k, &k)?;
    let ll = h(&l, &l)?;
    let n1 = (k.nrows() - 1) as f64;
    // scale-aware zero test: self-HSIC against the uncentered kernel energy
    let tiny = |v: f64, m: &DMatrix<f64>| v <= 1e-12 * m.norm_squared() / (n1 * n1) || v <= 0.0;
    if tiny(kk, &k) || tiny(ll, &l) {
        return Err(Error::UndefinedSimilarity("a representation has zero self-HSIC".into()));
    }
    Ok(h(&k, &l)? / (kk * ll).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_matrix, random_orthogonal};

    fn brute_rbf(x: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let n = x.nrows();
        let dist = |i: usize, j: usize| -> f64 {
            (0..x.ncols()).map(|c| (x[(i, c)] - x[(j, c)]).powi(2)).sum::<f64>().sqrt()
        };
        let mut all = vec![];
        for i in 0..n {
            for j in 0..i {
                all.push(dist(i, j));
            }
        }
        all.sort_by(f64::total_cmp);
        let med = if all.len() % 2 == 1 {
            all[all.len() / 2]
        } else {
            (all[all.len() / 2 - 1] + all[all.len() / 2]) / 2.0
        };
        let s = alpha * med;
        DMatrix::from_fn(n, n, |i, j| (-(dist(i, j).powi(2)) / (2.0 * s * s)).exp())
    }

    fn brute_hsic(k: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
        let n = k.nrows();
        let h = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
        ((&h * k * &h) * (&h * l * &h)).trace() / ((n - 1) as f64).powi(2)
    }

    #[test]
    fn rbf_two_rows() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]);
        let k = gram(&x, &KernelConfig::rbf(1.0)).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert!((k[(0, 1)] - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn linear_identity() {
        let k = gram(&DMatrix::<f64>::identity(2, 2), &KernelConfig::linear()).unwrap();
        assert_eq!(k, DMatrix::identity(2, 2));
    }

    #[test]
    fn rbf_matches_brute_force() {
        let x = random_matrix(4, 3, 11);
        let k = gram(&x, &KernelConfig::rbf(0.5)).unwrap();
        let b = brute_rbf(&x, 0.5);
        assert!((k - b).abs().max() < 1e-12);
    }

    #[test]
    fn rbf_rejects_identical_rows() {
        let x = DMatrix::from_element(3, 2, 1.5);
        assert!(matches!(gram(&x, &KernelConfig::rbf(1.0)), Err(Error::UndefinedSimilarity(_))));
    }

    #[test]
    fn hsic_constant_rows_is_zero() {
        let c = DMatrix::from_element(5, 3, 2.0);
        let k = gram(&c, &KernelConfig::linear()).unwrap();
        let l = gram(&random_matrix(5, 2, 1), &KernelConfig::linear()).unwrap();
        assert!(hsic(&k, &l).unwrap().abs() < 1e-12);
        assert!(hsic(&l, &k).unwrap().abs() < 1e-12);
    }

    #[test]
    fn hsic_hand_case() {
        // rows {0,1,2}: K = [[0,0,0],[0,1,2],[0,2,4]]; centered x = {-1,0,1}
        // HKH = x xᵀ, trace((x xᵀ)²) = (xᵀx)² = 4, / (n-1)² = 1
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let k = gram(&x, &KernelConfig::linear()).unwrap();
        let v = hsic(&k, &k).unwrap();
        assert!((v - brute_hsic(&k, &k)).abs() < 1e-14);
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn hsic_dimension_mismatch() {
        assert!(hsic(&DMatrix::zeros(3, 3), &DMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn cka_identity_and_invariance() {
        let x = random_matrix(30, 6, 2);
        assert!((cka(&x, &x, &KernelConfig::linear()).unwrap() - 1.0).abs() < 1e-10);
        assert!((cka(&x, &x, &KernelConfig::rbf(1.0)).unwrap() - 1.0).abs() < 1e-10);
        let q = random_orthogonal(6, 3);
        let xq = &x * q * 3.5;
        assert!((cka(&x, &xq, &KernelConfig::linear()).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cka_constant_is_undefined() {
        let x = random_matrix(10, 2, 2);
        let c = DMatrix::from_element(10, 2, 1.0);
        assert!(matches!(cka(&x, &c, &KernelConfig::linear()), Err(Error::UndefinedSimilarity(_))));
    }

    #[test]
    fn unbiased_estimator_agrees_on_identity() {
        let x = random_matrix(40, 4, 8);
        let v = cka_with(&x, &x, &KernelConfig::linear(), HsicEstimator::Unbiased).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let y = random_matrix(40, 4, 9);
        let u = cka_with(&x, &y, &KernelConfig::linear(), HsicEstimator::Unbiased).unwrap();
        let b = cka(&x, &y, &KernelConfig::linear()).unwrap();
        assert!(u < b, "debiasing should shrink the chance-level score: {u} vs {b}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn cka_symmetric_and_bounded(seed in any::<u64>(), n in 4usize..20, p in 1usize..6, q in 1usize..6) {
                let a = random_matrix(n, p, seed);
                let b = random_matrix(n, q, seed ^ 0xabcdef);
                for cfg in [KernelConfig::linear(), KernelConfig::rbf(0.8)] {
                    let ab = cka(&a, &b, &cfg).unwrap();
                    let ba = cka(&b, &a, &cfg).unwrap();
                    prop_assert!((ab - ba).abs() < 1e-10);
                    prop_assert!(ab >= -1e-9 && ab <= 1.0 + 1e-9);
                }
            }

            #[test]
            fn hsic_symmetric(seed in any::<u64>(), n in 3usize..12) {
                let k = gram(&random_matrix(n, 3, seed), &KernelConfig::linear()).unwrap();
                let l = gram(&random_matrix(n, 2, seed + 1), &KernelConfig::rbf(1.0)).unwrap();
                prop_assert!((hsic(&k, &l).unwrap() - hsic(&l, &k).unwrap()).abs() < 1e-12);
                prop_assert!((hsic(&k, &l).unwrap() - brute_hsic(&k, &l)).abs() < 1e-9);
                prop_assert!(hsic(&k, &k).unwrap() >= 0.0);
            }
        }
    }
}
