//! Deterministic synthetic data: fractal rasters, textures with planted
//! defects, labelled point clouds and planted layer dumps.
//!
//! Everything is driven by an explicit seed through ChaCha8, so fixtures are
//! identical across runs and platforms.

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::imagio::{write_pgm, BinaryGrid, GrayImage, ManifestEntry, Split};
use crate::simlab::ActivationMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sierpiński carpet of side `3^depth`.
pub fn sierpinski_carpet(depth: u32) -> BinaryGrid {
    let side = 3usize.pow(depth);
    BinaryGrid::from_fn(side, side, |mut x, mut y| {
        while x > 0 || y > 0 {
            if x % 3 == 1 && y % 3 == 1 {
                return false;
            }
            x /= 3;
            y /= 3;
        }
        true
    })
}

/// Sierpiński triangle of side `2^depth` (cells with `x & y == 0`).
pub fn sierpinski_triangle(depth: u32) -> BinaryGrid {
    let side = 1usize << depth;
    BinaryGrid::from_fn(side, side, |x, y| x & y == 0)
}

/// Occupied cells become `fg`, the rest `bg`.
pub fn grid_to_image(grid: &BinaryGrid, fg: u8, bg: u8) -> GrayImage {
    GrayImage::from_fn(grid.width(), grid.height(), |x, y| if grid.get(x, y) { fg } else { bg })
        .expect("grid dimensions are positive")
}

/// Uniform i.i.d. intensities.
pub fn noise_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut r = rng(seed);
    GrayImage::from_fn(width, height, |_, _| r.random()).expect("positive dimensions")
}

/// Standard-normal entries.
pub fn random_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    // fill row by row so the stream order matches row-major reading
    let data: Vec<f64> = (0..n * p).map(|_| r.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(n, p, &data)
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal(p: usize, seed: u64) -> DMatrix<f64> {
    random_matrix(p, p, seed).qr().q()
}

/// `count` layers over the rows of `z`: random Gaussian layers except at
/// `planted`, which holds `2.5·z·Q + c` plus Gaussian noise scaled to
/// `noise` times the signal's standard deviation. `Q` is a random
/// `p × (p+2)` matrix with orthonormal rows.
pub fn planted_layers(z: &DMatrix<f64>, count: usize, planted: usize, noise: f64, seed: u64) -> Vec<ActivationMatrix> {
    let (n, p) = z.shape();
    (0..count)
        .map(|i| {
            let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
            let values = if i == planted {
                let w = random_orthogonal(p + 2, s).rows(0, p) * 2.5;
                let c = random_matrix(1, p + 2, s + 500);
                let mut signal = z * w;
                for mut row in signal.row_iter_mut() {
                    row += &c;
                }
                let sd = (signal.map(|v| v * v).mean() - signal.mean().powi(2)).max(0.0).sqrt();
                signal + random_matrix(n, p + 2, s + 900) * (noise * sd)
            } else {
                random_matrix(n, p + 2, s)
            };
            ActivationMatrix::new(format!("layer{i}"), values).expect("finite random layer")
        })
        .collect()
}

/// Two Gaussian blobs in 2-D centred at `(-2,-2)` and `(2,2)` with unit
/// spread; labels alternate 0, 1.
pub fn gaussian_blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let c = if label == 0 { -2.0 } else { 2.0 };
        let a: f64 = r.sample(StandardNormal);
        let b: f64 = r.sample(StandardNormal);
        xs.push(vec![c + 0.5 * a, c + 0.5 * b]);
        ys.push(label);
    }
    (xs, ys)
}

/// The four XOR corners repeated `copies` times with uniform jitter in
/// `[-noise, noise]`.
pub fn noisy_xor(copies: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let corners = [([0.0, 0.0], 0), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)];
    let mut xs = Vec::with_capacity(copies * 4);
    let mut ys = Vec::with_capacity(copies * 4);
    for _ in 0..copies {
        for (c, l) in corners {
            xs.push(vec![c[0] + r.random_range(-noise..=noise), c[1] + r.random_range(-noise..=noise)]);
            ys.push(l);
        }
    }
    (xs, ys)
}

/// Surface-like texture: mid-gray background with small noise and sparse
/// bright speckles. With `defect`, a Sierpiński-triangle patch of side 32
/// (bright structure on a dark base) is stamped at a random position.
pub fn defect_texture(side: usize, defect: bool, seed: u64) -> GrayImage {
    let mut r = rng(seed);
    let mut img = GrayImage::from_fn(side, side, |_, _| {
        if r.random_bool(0.03) {
            r.random_range(190..=250)
        } else {
            r.random_range(80..=120)
        }
    })
    .expect("positive side");
    if defect {
        let patch = sierpinski_triangle(5);
        let ps = patch.width();
        let ox = r.random_range(0..=side - ps);
        let oy = r.random_range(0..=side - ps);
        let flip = r.random_bool(0.5);
        for y in 0..ps {
            for x in 0..ps {
                let (px, py) = if flip { (ps - 1 - x, y) } else { (x, y) };
                let v = if patch.get(px, py) { r.random_range(215..=255) } else { r.random_range(20..=50) };
                img.set(ox + x, oy + y, v);
            }
        }
    }
    img
}

/// Writes `count` textures (alternating clean/defect, label 1 = defect) as
/// PGM files under `dir`, splitting them train/val/test by the given
/// fractions of each class. Returns manifest entries with file names
/// relative to `dir`.
pub fn write_defect_dataset(
    dir: &Path,
    count: usize,
    side: usize,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<Vec<ManifestEntry>> {
    let per_class = count / 2;
    let n_test = (per_class as f64 * test_fraction).round() as usize;
    let n_val = (per_class as f64 * val_fraction).round() as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let label = (i % 2) as u32;
        let k = i / 2;
        let split = if k < n_test {
            Split::Test
        } else if k < n_test + n_val {
            Split::Val
        } else {
            Split::Train
        };
        let img = defect_texture(side, label == 1, seed.wrapping_add(i as u64));
        let name = format!("img{i:04}.pgm");
        write_pgm(&img, dir.join(&name))?;
        entries.push(ManifestEntry { path: name.into(), label, split });
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carpet_structure() {
        let c = sierpinski_carpet(2);
        assert_eq!(c.width(), 9);
        assert!(!c.get(4, 4));
        assert!(!c.get(1, 1));
        assert!(c.get(0, 0));
        assert_eq!(c.count_occupied(), 64);
        assert_eq!(sierpinski_carpet(5).count_occupied(), 8usize.pow(5));
    }

    #[test]
    fn triangle_structure() {
        assert_eq!(sierpinski_triangle(7).count_occupied(), 3usize.pow(7));
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(random_matrix(3, 4, 5), random_matrix(3, 4, 5));
        assert_ne!(random_matrix(3, 4, 5), random_matrix(3, 4, 6));
        assert_eq!(defect_texture(64, true, 1), defect_texture(64, true, 1));
        let q = random_orthogonal(5, 2);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-12);
    }
}
