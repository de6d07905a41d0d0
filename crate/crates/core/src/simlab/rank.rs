use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Representation;
use crate::error::{Error, Result};

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Ranks starting at 1, ties share their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Kendall's tau-b (tie-corrected), by direct pair enumeration.
pub fn kendall(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    let (mut conc, mut disc, mut tie_a, mut tie_b) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let da = a[i].total_cmp(&a[j]) as i32;
            let db = b[i].total_cmp(&b[j]) as i32;
            match (da, db) {
                (0, 0) => {}
                (0, _) => tie_a += 1,
                (_, 0) => tie_b += 1,
                _ if da == db => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let denom = (((conc + disc + tie_a) as f64) * ((conc + disc + tie_b) as f64)).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((conc - disc) as f64 / denom)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregate {
    /// Coefficient with the largest magnitude over all column pairs, signed.
    #[default]
    MaxAbs,
    /// Mean magnitude over all column pairs.
    MeanAbs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    pub aggregate: Aggregate,
    /// Randomly keep at most this many `Y` columns.
    pub max_y_columns: Option<usize>,
    pub seed: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self { aggregate: Aggregate::MaxAbs, max_y_columns: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub kendall: Option<f64>,
    pub pairs_evaluated: usize,
    pub skipped_z_columns: usize,
    pub skipped_y_columns: usize,
    /// `(cap, seed)` when `Y` columns were subsampled.
    pub subsample: Option<(usize, u64)>,
}

struct Acc {
    best: Option<f64>,
    sum_abs: f64,
    count: usize,
}

impl Acc {
    fn new() -> Self {
        Self { best: None, sum_abs: 0.0, count: 0 }
    }

    fn push(&mut self, v: f64) {
        if self.best.is_none_or(|b| v.abs() > b.abs()) {
            self.best = Some(v);
        }
        self.sum_abs += v.abs();
        self.count += 1;
    }

    fn finish(&self, agg: Aggregate) -> Option<f64> {
        match agg {
            Aggregate::MaxAbs => self.best,
            Aggregate::MeanAbs => (self.count > 0).then(|| self.sum_abs / self.count as f64),
        }
    }
}

fn columns(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn has_variance(c: &[f64]) -> bool {
    c.iter().any(|&v| v != c[0])
}

/// Pearson, Spearman and Kendall coefficients between every (Z column, Y
/// column) pair, each reduced to one scalar by `opts.aggregate`.
/// Constant columns are skipped and counted.
pub fn rank_correlations(z: &impl Representation, y: &impl Representation, opts: &RankOptions) -> Result<RankReport> {
    if z.n() != y.n() {
        return Err(Error::Shape(format!("row counts differ: {} vs {}", z.n(), y.n())));
    }
    let zc = columns(z.matrix());
    let mut yc = columns(y.matrix());
    let mut subsample = None;
    if let Some(cap) = opts.max_y_columns {
        if cap == 0 {
            return Err(Error::InvalidArgument("column cap must be >= 1".into()));
        }
        if yc.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut keep = sample(&mut rng, yc.len(), cap).into_vec();
            keep.sort_unstable();
            yc = keep.into_iter().map(|i| std::mem::take(&mut yc[i])).collect();
            subsample = Some((cap, opts.seed));
        }
    }

    let zv: Vec<&Vec<f64>> = zc.iter().filter(|c| has_variance(c)).collect();
    let yv: Vec<&Vec<f64>> = yc.iter().filter(|c| has_variance(c)).collect();
    let zr: Vec<Vec<f64>> = zv.iter().map(|c| average_ranks(c)).collect();
    let yr: Vec<Vec<f64>> = yv.iter().map(|c| average_ranks(c)).collect();

    let (mut p, mut s, mut k) = (Acc::new(), Acc::new(), Acc::new());
    for (i, a) in zv.iter().enumerate() {
        for (j, b) in yv.iter().enumerate() {
            if let Some(v) = pearson(a, b) {
                p.push(v);
            }
            if let Some(v) = pearson(&zr[i], &yr[j]) {
                s.push(v);
            }
            if let Some(v) = kendall(a, b) {
                k.push(v);
            }
        }
    }
    Ok(RankReport {
        pearson: p.finish(opts.aggregate),
        spearman: s.finish(opts.aggregate),
        kendall: k.finish(opts.aggregate),
        pairs_evaluated: zv.len() * yv.len(),
        skipped_z_columns: zc.len() - zv.len(),
        skipped_y_columns: yc.len() - yv.len(),
        subsample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    fn brute_kendall_no_ties(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    s += ((a[i] - a[j]) * (b[i] - b[j])).signum();
                }
            }
        }
        s / (n * (n - 1) / 2) as f64
    }

    #[test]
    fn exact_linear() {
        let r = rank_correlations(&col(&[1.0, 2.0, 3.0]), &col(&[2.0, 4.0, 6.0]), &RankOptions::default()).unwrap();
        assert_eq!((r.pearson, r.spearman, r.kendall), (Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn negation() {
        let r = rank_correlations(&col(&[1.0, 5.0, 2.0]), &col(&[-1.0, -5.0, -2.0]), &RankOptions::default()).unwrap();
        assert_eq!((r.pearson, r.spearman, r.kendall), (Some(-1.0), Some(-1.0), Some(-1.0)));
    }

    #[test]
    fn hand_rank_case() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 3.0, 2.0, 4.0];
        // d = (0, -1, 1, 0): 1 - 6*2/(4*15) = 0.8; 5 concordant, 1 discordant of 6
        assert!((spearman(&a, &b).unwrap() - 0.8).abs() < 1e-12);
        assert!((kendall(&a, &b).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((brute_kendall_no_ties(&a, &b) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tied_ranks_average() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn constant_columns_are_skipped() {
        let z = DMatrix::from_row_slice(3, 2, &[1.0, 7.0, 2.0, 7.0, 3.0, 7.0]);
        let r = rank_correlations(&z, &col(&[3.0, 2.0, 1.0]), &RankOptions::default()).unwrap();
        assert_eq!(r.skipped_z_columns, 1);
        assert_eq!(r.pairs_evaluated, 1);
        assert_eq!(r.pearson, Some(-1.0));
    }

    #[test]
    fn max_keeps_sign_mean_uses_magnitude() {
        let z = col(&[1.0, 2.0, 3.0, 4.0]);
        let y = DMatrix::from_row_slice(4, 2, &[4.0, 1.0, 3.0, 3.0, 2.0, 2.0, 1.0, 4.0]);
        let r = rank_correlations(&z, &y, &RankOptions::default()).unwrap();
        assert_eq!(r.kendall, Some(-1.0));
        let opts = RankOptions { aggregate: Aggregate::MeanAbs, ..Default::default() };
        let r = rank_correlations(&z, &y, &opts).unwrap();
        assert!((r.kendall.unwrap() - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn subsampling_is_seeded() {
        let z = crate::synth::random_matrix(20, 2, 1);
        let y = crate::synth::random_matrix(20, 50, 2);
        let opts = RankOptions { max_y_columns: Some(5), seed: 9, ..Default::default() };
        let a = rank_correlations(&z, &y, &opts).unwrap();
        let b = rank_correlations(&z, &y, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pairs_evaluated, 10);
        assert_eq!(a.subsample, Some((5, 9)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kendall_matches_brute_force(v in proptest::collection::hash_set(-1000i32..1000, 3..30), seed in any::<u64>()) {
                let a: Vec<f64> = v.iter().map(|&x| x as f64).collect();
                let mut b = a.clone();
                // deterministic permutation
                let mut s = seed;
                for i in (1..b.len()).rev() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                    b.swap(i, (s >> 33) as usize % (i + 1));
                }
                let k = kendall(&a, &b).unwrap();
                prop_assert!((k - brute_kendall_no_ties(&a, &b)).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&k));
                let sp = spearman(&a, &b).unwrap();
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&sp));
            }
        }
    }
}
