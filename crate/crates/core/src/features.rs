//! Multi-scale fractal (ZFrac) feature vectors and the Prewitt baseline.
//!
//! An image is binarized with one global threshold, padded to an `M`×`M`
//! power-of-two square and, for every window side `w` of the schedule, tiled
//! into `(M/w)²` non-overlapping blocks. Each block contributes its fractal
//! dimension; blocks are flattened row-major per level and levels are
//! concatenated in schedule order.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractal::{default_radii, fit_fd, series_for_region};
use crate::imagio::{
    binarize, downsample_nearest, load_gray_image, otsu_threshold, pad_to_square_pow2, DatasetManifest, GrayImage,
    Split,
};
use crate::simlab::FeatureMatrix;
use crate::util::{atomic_write, sha256_hex};

/// Block side lengths in pixels, strictly increasing powers of two `>= 2`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSchedule {
    windows: Vec<usize>,
}

impl WindowSchedule {
    pub fn new(windows: Vec<usize>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::InvalidArgument("window schedule is empty".into()));
        }
        if let Some(w) = windows.iter().find(|&&w| w < 2 || !w.is_power_of_two()) {
            return Err(Error::InvalidArgument(format!("window {w} is not a power of two >= 2")));
        }
        if windows.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::InvalidArgument("windows must be strictly increasing".into()));
        }
        Ok(Self { windows })
    }

    /// Every power of two from 2 to `side / 2`.
    pub fn full(side: usize) -> Result<Self> {
        let windows = std::iter::successors(Some(2usize), |w| Some(w * 2)).take_while(|&w| w <= side / 2).collect();
        Self::new(windows)
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn check_side(&self, side: usize) -> Result<()> {
        match self.windows.last() {
            Some(&w) if w > side / 2 => Err(Error::InvalidArgument(format!(
                "window {w} exceeds half the padded side {side}"
            ))),
            _ => Ok(()),
        }
    }

    /// Number of entries a ZFrac vector has for padded side `side`.
    pub fn feature_len(&self, side: usize) -> usize {
        self.windows.iter().map(|&w| (side / w) * (side / w)).sum()
    }
}

impl Default for WindowSchedule {
    fn default() -> Self {
        Self { windows: vec![2, 4, 8, 16, 32] }
    }
}

impl FromStr for WindowSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let windows = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad window {t:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(windows)
    }
}

impl fmt::Display for WindowSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.windows.iter().map(|w| w.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Threshold {
    Otsu,
    Fixed(u8),
}

impl Threshold {
    pub fn resolve(self, img: &GrayImage) -> u8 {
        match self {
            Threshold::Otsu => otsu_threshold(img),
            Threshold::Fixed(t) => t,
        }
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "otsu" {
            return Ok(Threshold::Otsu);
        }
        s.strip_prefix("fixed:")
            .and_then(|v| v.parse().ok())
            .map(Threshold::Fixed)
            .ok_or_else(|| Error::InvalidArgument(format!("threshold {s:?} is not otsu or fixed:0..255")))
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Otsu => f.write_str("otsu"),
            Threshold::Fixed(t) => write!(f, "fixed:{t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub threshold: Threshold,
    /// Nearest-neighbour resample to `D`×`D` before binarizing.
    pub downsample: Option<usize>,
    /// Z-score each window level within the vector.
    pub normalize_levels: bool,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self { threshold: Threshold::Otsu, downsample: None, normalize_levels: false }
    }
}

impl ExtractConfig {
    /// Stable digest of the configuration together with the schedule.
    pub fn digest(&self, schedule: &WindowSchedule) -> String {
        let canon = format!(
            "zfrac-v1;threshold={};downsample={:?};normalize={};schedule={}",
            self.threshold, self.downsample, self.normalize_levels, schedule
        );
        sha256_hex(canon.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceMeta {
    pub threshold: u8,
    pub source_width: usize,
    pub source_height: usize,
    pub padded_side: usize,
    pub degenerate_blocks: usize,
    pub out_of_range_blocks: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZFracVector {
    pub values: Vec<f64>,
    /// `(w, blocks_per_side)` in concatenation order.
    pub layout: Vec<(usize, usize)>,
    pub meta: SourceMeta,
}

impl ZFracVector {
    /// Slice of `values` belonging to window level `level`.
    pub fn level(&self, level: usize) -> &[f64] {
        let start: usize = self.layout[..level].iter().map(|&(_, b)| b * b).sum();
        let (_, b) = self.layout[level];
        &self.values[start..start + b * b]
    }
}

pub fn extract_zfrac(img: &GrayImage, schedule: &WindowSchedule, cfg: &ExtractConfig) -> Result<ZFracVector> {
    let resampled;
    let img = match cfg.downsample {
        Some(d) => {
            resampled = downsample_nearest(img, d)?;
            &resampled
        }
        None => img,
    };
    let thr = cfg.threshold.resolve(img);
    let grid = pad_to_square_pow2(&binarize(img, thr));
    let side = grid.width();
    schedule.check_side(side)?;

    let mut values = Vec::with_capacity(schedule.feature_len(side));
    let mut layout = Vec::with_capacity(schedule.windows().len());
    let (mut degenerate, mut out_of_range) = (0, 0);
    for &w in schedule.windows() {
        let per_side = side / w;
        let radii = default_radii(w);
        let fits: Vec<_> = (0..per_side * per_side)
            .into_par_iter()
            .map(|b| {
                let (bx, by) = (b % per_side, b / per_side);
                fit_fd(&series_for_region(&grid, bx * w, by * w, w, &radii))
            })
            .collect();
        let start = values.len();
        for f in &fits {
            degenerate += f.degenerate as usize;
            out_of_range += f.out_of_range as usize;
            values.push(f.fd);
        }
        if cfg.normalize_levels {
            standardize_in_place(&mut values[start..]);
        }
        layout.push((w, per_side));
    }
    debug_assert_eq!(values.len(), schedule.feature_len(side));

    Ok(ZFracVector {
        values,
        layout,
        meta: SourceMeta {
            threshold: thr,
            source_width: img.width(),
            source_height: img.height(),
            padded_side: side,
            degenerate_blocks: degenerate,
            out_of_range_blocks: out_of_range,
        },
    })
}

fn standardize_in_place(xs: &mut [f64]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    for x in xs.iter_mut() {
        *x -= mean;
        if sd > 0.0 {
            *x /= sd;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrewittKind {
    Horizontal,
    Vertical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineFeatureVector {
    pub kind: PrewittKind,
    pub width: usize,
    pub height: usize,
    /// Signed responses over the `(width-2)`×`(height-2)` interior, row-major.
    pub values: Vec<f64>,
}

/// Valid-mode 3×3 Prewitt response (correlation, no kernel flip).
///
/// Horizontal kernel rows are `[-1,-1,-1], [0,0,0], [1,1,1]`; the vertical
/// kernel is its transpose.
pub fn extract_prewitt(img: &GrayImage, kind: PrewittKind) -> Result<BaselineFeatureVector> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::InvalidArgument(format!(
            "prewitt needs at least 3x3, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let (ow, oh) = (img.width() - 2, img.height() - 2);
    let px = |x: usize, y: usize| img.get(x, y) as f64;
    let mut values = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        for x in 0..ow {
            let v = match kind {
                PrewittKind::Horizontal => {
                    (px(x, y + 2) + px(x + 1, y + 2) + px(x + 2, y + 2)) - (px(x, y) + px(x + 1, y) + px(x + 2, y))
                }
                PrewittKind::Vertical => {
                    (px(x + 2, y) + px(x + 2, y + 1) + px(x + 2, y + 2)) - (px(x, y) + px(x, y + 1) + px(x, y + 2))
                }
            };
            values.push(v);
        }
    }
    Ok(BaselineFeatureVector { kind, width: ow, height: oh, values })
}

const ZFT_MAGIC: &[u8; 4] = b"ZFT1";

/// Feature rows with labels, as stored in `ZFT1` files.
///
/// Layout (little-endian): magic `ZFT1`, `u32` rows, `u32` cols, `u32`
/// schedule length, schedule entries as `u32`, `rows*cols` `f32` row-major,
/// then `rows` `i32` labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub schedule: Vec<u32>,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    pub labels: Vec<i32>,
}

impl FeatureTable {
    pub fn new(schedule: Vec<u32>, cols: usize, values: Vec<f32>, labels: Vec<i32>) -> Result<Self> {
        let rows = labels.len();
        if values.len() != rows * cols {
            return Err(Error::Shape(format!("{} values for {rows}x{cols}", values.len())));
        }
        Ok(Self { schedule, rows, cols, values, labels })
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_feature_matrix(&self) -> Result<FeatureMatrix> {
        FeatureMatrix::from_row_major(self.rows, self.cols, self.values.iter().map(|&v| v as f64).collect())
    }

    /// Labels as class indices; fails on negative labels.
    pub fn class_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|&l| usize::try_from(l).map_err(|_| Error::InvalidArgument(format!("negative label {l}"))))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * (self.schedule.len() + self.values.len() + self.labels.len()));
        out.extend_from_slice(ZFT_MAGIC);
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.schedule.len() as u32).to_le_bytes());
        for w in &self.schedule {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = LeReader { bytes, pos: 0 };
        if r.take(4)? != ZFT_MAGIC {
            return Err("bad magic (expected ZFT1)".into());
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let slen = r.u32()? as usize;
        let schedule = (0..slen).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let n = rows.checked_mul(cols).ok_or("row/column overflow")?;
        if bytes.len() < r.pos + 4 * n {
            return Err("truncated feature values".into());
        }
        let values = (0..n).map(|_| r.u32().map(f32::from_bits)).collect::<std::result::Result<Vec<_>, _>>()?;
        let labels = (0..rows).map(|_| r.u32().map(|u| u as i32)).collect::<std::result::Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(Self { schedule, rows, cols, values, labels })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        atomic_write(path.as_ref(), &self.to_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::decode(path, m))
    }

    /// CSV mirror: `label,f0,f1,...` with one row per example.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for j in 0..self.cols {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for i in 0..self.rows {
            out.push_str(&self.labels[i].to_string());
            for v in self.row(i) {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) struct LeReader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> LeReader<'a> {
    pub fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
}

/// On-disk cache of single-image extractions keyed by image and config digest.
#[derive(Clone, Debug)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry(&self, image_digest: &str, config_digest: &str) -> PathBuf {
        self.dir.join(format!("{}-{}.zft", &image_digest[..32], &config_digest[..16]))
    }

    fn get(&self, image_digest: &str, config_digest: &str) -> Option<Vec<f32>> {
        let bytes = fs::read(self.entry(image_digest, config_digest)).ok()?;
        let t = FeatureTable::from_bytes(&bytes).ok()?;
        (t.rows == 1).then_some(t.values)
    }

    fn put(&self, image_digest: &str, config_digest: &str, schedule: &[u32], values: &[f32]) -> Result<()> {
        let t = FeatureTable::new(schedule.to_vec(), values.len(), values.to_vec(), vec![-1])?;
        t.write(self.entry(image_digest, config_digest))
    }
}

#[derive(Clone, Debug)]
pub struct BatchOutput {
    /// One table per split present in the manifest.
    pub splits: BTreeMap<Split, FeatureTable>,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

impl BatchOutput {
    /// Digest of every split table, in split order.
    pub fn digest(&self) -> String {
        let mut all = Vec::new();
        for (s, t) in &self.splits {
            all.extend_from_slice(s.as_str().as_bytes());
            all.extend_from_slice(&t.to_bytes());
        }
        sha256_hex(&all)
    }
}

/// Extracts every manifest image on a pool of `workers` threads.
///
/// Rows keep manifest order within each split and the output does not depend
/// on the worker count. All rows must share a feature length.
pub fn batch_extract(
    manifest: &DatasetManifest,
    schedule: &WindowSchedule,
    cfg: &ExtractConfig,
    workers: usize,
    cache: Option<&FeatureCache>,
) -> Result<BatchOutput> {
    if workers == 0 {
        return Err(Error::InvalidArgument("worker count must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    let cfg_digest = cfg.digest(schedule);
    let sched_u32: Vec<u32> = schedule.windows().iter().map(|&w| w as u32).collect();

    let rows: Vec<Result<(Vec<f32>, bool)>> = pool.install(|| {
        manifest
            .entries()
            .par_iter()
            .map(|e| {
                let bytes = fs::read(&e.path).map_err(|err| Error::io(&e.path, err))?;
                let img_digest = cache.map(|_| sha256_hex(&bytes));
                if let (Some(c), Some(d)) = (cache, img_digest.as_deref()) {
                    if let Some(v) = c.get(d, &cfg_digest) {
                        return Ok((v, true));
                    }
                }
                let img = crate::imagio::decode_gray_image(&bytes).map_err(|m| Error::decode(&e.path, m))?;
                let z = extract_zfrac(&img, schedule, cfg).map_err(|err| match err {
                    Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", e.path.display())),
                    other => other,
                })?;
                let v: Vec<f32> = z.values.iter().map(|&x| x as f32).collect();
                if let (Some(c), Some(d)) = (cache, img_digest.as_deref()) {
                    c.put(d, &cfg_digest, &sched_u32, &v)?;
                }
                Ok((v, false))
            })
            .collect()
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let expected = rows.first().map(|r| r.0.len()).unwrap_or(0);
    let odd: Vec<String> = manifest
        .entries()
        .iter()
        .zip(&rows)
        .filter(|(_, r)| r.0.len() != expected)
        .map(|(e, r)| format!("{} ({} entries)", e.path.display(), r.0.len()))
        .collect();
    if !odd.is_empty() {
        return Err(Error::Shape(format!(
            "feature lengths differ from {} ({expected} entries): {}",
            manifest.entries()[0].path.display(),
            odd.join(", ")
        )));
    }

    let cache_hits = rows.iter().filter(|r| r.1).count();
    let mut splits = BTreeMap::new();
    for split in Split::ALL {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for (e, r) in manifest.entries().iter().zip(&rows) {
            if e.split == split {
                values.extend_from_slice(&r.0);
                labels.push(e.label as i32);
            }
        }
        if !labels.is_empty() {
            splits.insert(split, FeatureTable::new(sched_u32.clone(), expected, values, labels)?);
        }
    }
    Ok(BatchOutput { splits, cache_hits, cache_misses: rows.len() - cache_hits })
}

/// Loads one image and extracts it; convenience for single-file callers.
pub fn extract_file(path: impl AsRef<Path>, schedule: &WindowSchedule, cfg: &ExtractConfig) -> Result<ZFracVector> {
    extract_zfrac(&load_gray_image(path)?, schedule, cfg)
}
