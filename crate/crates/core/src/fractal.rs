//! Box counting and fractal-dimension fitting.
//!
//! For a box side `r`, `N(r)` is the number of cells of the `r`×`r` lattice
//! anchored at the grid origin that contain at least one occupied pixel. The
//! fractal dimension is the least-squares slope of `ln N` against `ln(1/r)`.

use crate::error::{Error, Result};
use crate::imagio::{pad_to_square_pow2, BinaryGrid};

/// `(r, N(r))` pairs ordered by increasing box side.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxCountSeries {
    points: Vec<(usize, u64)>,
}

impl BoxCountSeries {
    /// Builds a series from measured points without requiring power-of-two
    /// sides. Sides must still be strictly increasing and `>= 1`, and counts
    /// non-increasing. Used for fixtures measured at other scales (e.g. the
    /// ternary Sierpiński carpet).
    pub fn from_points(points: Vec<(usize, u64)>) -> Result<Self> {
        if points.iter().any(|&(r, _)| r == 0) {
            return Err(Error::InvalidArgument("box side must be >= 1".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::InvalidArgument("box sides must be strictly increasing".into()));
        }
        if points.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(Error::InvalidArgument("box counts must be non-increasing".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(usize, u64)] {
        &self.points
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractalEstimate {
    pub fd: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// No usable regression; `fd` is 0.
    pub degenerate: bool,
    /// Non-degenerate slope outside `[0, 2]`. Reported, never clamped.
    pub out_of_range: bool,
}

impl FractalEstimate {
    fn degenerate(n_points: usize) -> Self {
        Self { fd: 0.0, r_squared: 0.0, n_points, degenerate: true, out_of_range: false }
    }
}

fn check_radius(width: usize, height: usize, r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidArgument("box side must be >= 1".into()));
    }
    if r > width && r > height {
        return Err(Error::InvalidArgument(format!("box side {r} exceeds grid {width}x{height}")));
    }
    Ok(())
}

/// Counts occupied `r`×`r` boxes inside the rectangle `[x0, x0+w) × [y0, y0+h)`,
/// with the lattice anchored at `(x0, y0)`. Edge boxes may be partial.
pub(crate) fn box_count_region(grid: &BinaryGrid, x0: usize, y0: usize, w: usize, h: usize, r: usize) -> u64 {
    let cells = grid.cells();
    let stride = grid.width();
    let bx = w.div_ceil(r);
    let by = h.div_ceil(r);
    let mut count = 0u64;
    for j in 0..by {
        let ys = y0 + j * r;
        let ye = (ys + r).min(y0 + h);
        'boxes: for i in 0..bx {
            let xs = x0 + i * r;
            let xe = (xs + r).min(x0 + w);
            for y in ys..ye {
                if cells[y * stride + xs..y * stride + xe].iter().any(|&b| b) {
                    count += 1;
                    continue 'boxes;
                }
            }
        }
    }
    count
}

pub fn box_count(grid: &BinaryGrid, r: usize) -> Result<u64> {
    check_radius(grid.width(), grid.height(), r)?;
    Ok(box_count_region(grid, 0, 0, grid.width(), grid.height(), r))
}

fn check_pow2_radii(radii: &[usize]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("radii must be non-empty".into()));
    }
    if let Some(r) = radii.iter().find(|r| !r.is_power_of_two()) {
        return Err(Error::InvalidArgument(format!("box side {r} is not a power of two")));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("radii must be strictly increasing".into()));
    }
    Ok(())
}

pub fn box_count_series(grid: &BinaryGrid, radii: &[usize]) -> Result<BoxCountSeries> {
    check_pow2_radii(radii)?;
    let points = radii
        .iter()
        .map(|&r| box_count(grid, r).map(|n| (r, n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoxCountSeries { points })
}

pub(crate) fn series_for_region(grid: &BinaryGrid, x0: usize, y0: usize, side: usize, radii: &[usize]) -> BoxCountSeries {
    BoxCountSeries {
        points: radii.iter().map(|&r| (r, box_count_region(grid, x0, y0, side, side, r))).collect(),
    }
}

/// Ordinary least squares `y = intercept + slope * x`; returns
/// `(slope, intercept, r_squared)`. Needs at least two distinct `x`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Fits `fd` as the slope of `ln N` over `ln(1/r)`, skipping `N = 0` points.
///
/// Fewer than two surviving points, or every surviving count equal to one
/// (a single-box object), yields a degenerate estimate with `fd = 0`.
pub fn fit_fd(series: &BoxCountSeries) -> FractalEstimate {
    let kept: Vec<(usize, u64)> = series.points.iter().copied().filter(|&(_, n)| n > 0).collect();
    if kept.len() < 2 || kept.iter().all(|&(_, n)| n == 1) {
        return FractalEstimate::degenerate(kept.len());
    }
    let xs: Vec<f64> = kept.iter().map(|&(r, _)| -(r as f64).ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|&(_, n)| (n as f64).ln()).collect();
    let (fd, _, r_squared) = ols(&xs, &ys);
    FractalEstimate {
        fd,
        r_squared,
        n_points: kept.len(),
        degenerate: false,
        out_of_range: !(0.0..=2.0).contains(&fd),
    }
}

/// Powers of two from 1 to `side / 2`; sides of 2 or less use `{1, .., side}`
/// so a 2×2 block still yields a two-point fit.
pub fn default_radii(side: usize) -> Vec<usize> {
    let top = if side <= 2 { side } else { side / 2 };
    std::iter::successors(Some(1usize), |r| Some(r * 2)).take_while(|&r| r <= top).collect()
}

/// Fractal dimension of a whole grid after padding to a power-of-two square.
pub fn fd_of_grid(grid: &BinaryGrid) -> FractalEstimate {
    if grid.is_empty() {
        return FractalEstimate::degenerate(0);
    }
    let padded = pad_to_square_pow2(grid);
    let side = padded.width();
    let radii = default_radii(side);
    fit_fd(&series_for_region(&padded, 0, 0, side, &radii))
}

/// Same as [`fd_of_grid`] but also returns the series that was fitted.
pub fn fd_of_grid_with_series(grid: &BinaryGrid) -> (FractalEstimate, BoxCountSeries) {
    if grid.is_empty() {
        return (FractalEstimate::degenerate(0), BoxCountSeries { points: vec![] });
    }
    let padded = pad_to_square_pow2(grid);
    let side = padded.width();
    let series = series_for_region(&padded, 0, 0, side, &default_radii(side));
    (fit_fd(&series), series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn naive_count(g: &BinaryGrid, r: usize) -> u64 {
        let bx = g.width().div_ceil(r);
        let by = g.height().div_ceil(r);
        let mut hit = vec![false; bx * by];
        for y in 0..g.height() {
            for x in 0..g.width() {
                if g.get(x, y) {
                    hit[(y / r) * bx + x / r] = true;
                }
            }
        }
        hit.iter().filter(|&&h| h).count() as u64
    }

    #[test]
    fn count_examples() {
        let full = BinaryGrid::from_fn(4, 4, |_, _| true);
        assert_eq!(box_count(&full, 2).unwrap(), 4);
        let mut one = BinaryGrid::empty(4, 4);
        one.set(2, 1, true);
        for r in [1, 2, 4] {
            assert_eq!(box_count(&one, r).unwrap(), 1);
        }
        let checker = BinaryGrid::from_fn(8, 8, |x, y| (x + y) % 2 == 0);
        assert_eq!(box_count(&checker, 2).unwrap(), 16);
    }

    #[test]
    fn count_rejects_bad_radius() {
        let g = BinaryGrid::empty(4, 3);
        assert!(box_count(&g, 0).is_err());
        assert!(box_count(&g, 5).is_err());
        assert!(box_count(&g, 4).is_ok());
    }

    #[test]
    fn partial_edge_boxes() {
        let mut g = BinaryGrid::empty(5, 3);
        g.set(4, 2, true);
        assert_eq!(box_count(&g, 2).unwrap(), 1);
        assert_eq!(box_count(&g, 4).unwrap(), 1);
    }

    #[test]
    fn series_examples() {
        let full = BinaryGrid::from_fn(4, 4, |_, _| true);
        let s = box_count_series(&full, &[1, 2, 4]).unwrap();
        assert_eq!(s.points(), &[(1, 16), (2, 4), (4, 1)]);
        let s = box_count_series(&BinaryGrid::empty(4, 4), &[1, 2]).unwrap();
        assert_eq!(s.points(), &[(1, 0), (2, 0)]);
        assert!(box_count_series(&full, &[2, 1]).is_err());
        assert!(box_count_series(&full, &[1, 3]).is_err());
        assert!(box_count_series(&full, &[]).is_err());
    }

    #[test]
    fn carpet_ternary_series() {
        let carpet = synth::sierpinski_carpet(5);
        let pts: Vec<(usize, u64)> =
            [1usize, 3, 9, 27, 81].iter().map(|&r| (r, naive_count(&carpet, r))).collect();
        let counts: Vec<u64> = pts.iter().map(|p| p.1).collect();
        assert_eq!(counts, vec![32768, 4096, 512, 64, 8]);
        for &(r, n) in &pts {
            assert_eq!(box_count(&carpet, r).unwrap(), n);
        }
        let est = fit_fd(&BoxCountSeries::from_points(pts).unwrap());
        assert!((est.fd - 8f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!(est.r_squared > 0.999);
    }

    #[test]
    fn fit_examples() {
        let s = BoxCountSeries::from_points(vec![(1, 16), (2, 4), (4, 1)]).unwrap();
        let e = fit_fd(&s);
        assert_eq!(e.fd, 2.0);
        assert_eq!(e.r_squared, 1.0);
        assert!(!e.degenerate);

        let e = fit_fd(&BoxCountSeries::from_points(vec![(1, 1), (2, 1), (4, 1)]).unwrap());
        assert_eq!(e.fd, 0.0);
        assert!(e.degenerate);

        let e = fit_fd(&BoxCountSeries::from_points(vec![(1, 3), (2, 0), (4, 0)]).unwrap());
        assert!(e.degenerate);
        assert_eq!(e.n_points, 1);
    }

    #[test]
    fn two_point_fit_is_closed_form() {
        let s = BoxCountSeries::from_points(vec![(1, 7), (2, 3)]).unwrap();
        let e = fit_fd(&s);
        let want = (7f64.ln() - 3f64.ln()) / (0.0 - (0.5f64).ln());
        assert!((e.fd - want).abs() < 1e-12);
        assert_eq!(e.r_squared, 1.0);
    }

    #[test]
    fn grid_examples() {
        assert_eq!(fd_of_grid(&BinaryGrid::from_fn(8, 8, |_, _| true)).fd, 2.0);
        // counts (1,8),(2,4),(4,2): slope exactly 1
        let row = fd_of_grid(&BinaryGrid::from_fn(8, 8, |_, y| y == 3));
        assert!((row.fd - 1.0).abs() < 0.15);
        let e = fd_of_grid(&BinaryGrid::empty(8, 8));
        assert!(e.degenerate);
        assert_eq!(e.fd, 0.0);
    }

    #[test]
    fn radii_schedule() {
        assert_eq!(default_radii(1), vec![1]);
        assert_eq!(default_radii(2), vec![1, 2]);
        assert_eq!(default_radii(4), vec![1, 2]);
        assert_eq!(default_radii(256), vec![1, 2, 4, 8, 16, 32, 64, 128]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grid(max: usize) -> impl Strategy<Value = BinaryGrid> {
            (1usize..=max, 1usize..=max, 0.0f64..1.0).prop_flat_map(|(w, h, p)| {
                proptest::collection::vec(proptest::bool::weighted(p), w * h)
                    .prop_map(move |c| BinaryGrid::new(w, h, c).unwrap())
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn matches_naive_counter(g in grid(64), k in 0u32..7) {
                let r = 1usize << k;
                prop_assume!(r <= g.width().max(g.height()));
                prop_assert_eq!(box_count(&g, r).unwrap(), naive_count(&g, r));
            }

            #[test]
            fn counts_non_increasing(g in grid(32)) {
                let p = pad_to_square_pow2(&g);
                let radii = default_radii(p.width());
                let s = box_count_series(&p, &radii).unwrap();
                for w in s.points().windows(2) {
                    prop_assert!(w[0].1 >= w[1].1);
                }
                for &(r, n) in s.points() {
                    prop_assert!(n <= (p.width().div_ceil(r) * p.height().div_ceil(r)) as u64);
                }
            }

            #[test]
            fn aligned_shift_invariance(g in grid(16), sx in 0usize..2, sy in 0usize..2) {
                // shift by multiples of the largest radius (8) keeps every lattice aligned
                let radii = [1usize, 2, 4, 8];
                let (dx, dy) = (sx * 8, sy * 8);
                let shifted = BinaryGrid::from_fn(32, 32, |x, y| {
                    x >= dx && y >= dy && x - dx < g.width() && y - dy < g.height() && g.get(x - dx, y - dy)
                });
                let base = BinaryGrid::from_fn(32, 32, |x, y| x < g.width() && y < g.height() && g.get(x, y));
                prop_assert_eq!(box_count_series(&base, &radii).unwrap(), box_count_series(&shifted, &radii).unwrap());
            }

            #[test]
            fn two_point_ols_closed_form(n1 in 2u64..1000, n2 in 1u64..1000) {
                prop_assume!(n2 <= n1);
                let xs = [0.0, -(2f64).ln()];
                let ys = [(n1 as f64).ln(), (n2 as f64).ln()];
                let (slope, intercept, _) = ols(&xs, &ys);
                let want_slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
                prop_assert!((slope - want_slope).abs() < 1e-12);
                prop_assert!((intercept - ys[0]).abs() < 1e-12);
            }

            #[test]
            fn non_degenerate_flag_tracks_bounds(g in grid(32)) {
                let e = fd_of_grid(&g);
                if !e.degenerate {
                    prop_assert_eq!(e.out_of_range, !(0.0..=2.0).contains(&e.fd));
                }
            }
        }
    }
}
