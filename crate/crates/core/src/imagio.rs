//! Image and manifest loading, binarization and padding.
//!
//! Supported inputs are PGM (`P2` ASCII and `P5` binary) and 8-bit PNG in
//! grayscale or RGB. Color is reduced to luminance with the BT.601 weights
//! `0.299 R + 0.587 G + 0.114 B`, rounded to the nearest integer.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Upper bound on decoded pixel count (2^30).
const MAX_PIXELS: u64 = 1 << 30;

/// An 8-bit grayscale raster stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image dimensions must be positive, got {width}x{height}")));
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidArgument(format!("dimension overflow: {width}x{height}")))?;
        if pixels.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer has {} entries, expected {expected} for {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }
}

/// Row-major occupancy grid consumed by box counting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGrid {
    width: usize,
    height: usize,
    occupied: Vec<bool>,
}

impl BinaryGrid {
    pub fn new(width: usize, height: usize, occupied: Vec<bool>) -> Result<Self> {
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| Error::InvalidArgument(format!("dimension overflow: {width}x{height}")))?;
        if occupied.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "occupancy buffer has {} entries, expected {expected}",
                occupied.len()
            )));
        }
        Ok(Self { width, height, occupied })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, occupied: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut occupied = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                occupied.push(f(x, y));
            }
        }
        Self { width, height, occupied }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.occupied[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.occupied[y * self.width + x] = v;
    }

    pub fn count_occupied(&self) -> usize {
        self.occupied.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

pub fn load_gray_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gray_image(&bytes).map_err(|msg| Error::decode(path, msg))
}

/// Decodes PGM or PNG bytes; the error string carries no path.
pub fn decode_gray_image(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err("unsupported image format (expected PGM P2/P5 or PNG)".into())
    }
}

fn check_dims(width: u64, height: u64) -> std::result::Result<(usize, usize), String> {
    if width == 0 || height == 0 {
        return Err(format!("invalid dimensions {width}x{height}"));
    }
    match width.checked_mul(height) {
        Some(n) if n <= MAX_PIXELS => Ok((width as usize, height as usize)),
        _ => Err(format!("dimension overflow: {width}x{height}")),
    }
}

struct PgmTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmTokens<'_> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_u64(&mut self) -> std::result::Result<u64, String> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected integer at byte {start}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("integer out of range at byte {start}"))
    }
}

fn decode_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let ascii = bytes[1] == b'2';
    let mut tok = PgmTokens { bytes, pos: 2 };
    let width = tok.next_u64()?;
    let height = tok.next_u64()?;
    let maxval = tok.next_u64()?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported bit depth: maxval {maxval}"));
    }
    let (w, h) = check_dims(width, height)?;
    let n = w * h;
    let scale = |v: u64| -> std::result::Result<u8, String> {
        if v > maxval {
            return Err(format!("sample {v} exceeds maxval {maxval}"));
        }
        Ok(if maxval == 255 { v as u8 } else { ((v * 255 + maxval / 2) / maxval) as u8 })
    };
    let mut pixels = Vec::with_capacity(n);
    if ascii {
        for _ in 0..n {
            pixels.push(scale(tok.next_u64()?)?);
        }
    } else {
        // exactly one whitespace byte separates the header from the raster
        let start = tok.pos + 1;
        let raster = bytes
            .get(start..start + n)
            .ok_or_else(|| format!("truncated raster: need {n} bytes"))?;
        for &b in raster {
            pixels.push(scale(b as u64)?);
        }
    }
    GrayImage::new(w, h, pixels).map_err(|e| e.to_string())
}

#[inline]
fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round().min(255.0) as u8
}

fn decode_png(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| format!("png: {e}"))?;
    {
        let info = reader.info();
        check_dims(info.width as u64, info.height as u64)?;
    }
    let mut buf = vec![0; reader.output_buffer_size().ok_or("png: output buffer too large")?];
    let frame = reader.next_frame(&mut buf).map_err(|e| format!("png: {e}"))?;
    if frame.bit_depth != png::BitDepth::Eight {
        return Err(format!("unsupported bit depth: {:?}", frame.bit_depth));
    }
    let (w, h) = (frame.width as usize, frame.height as usize);
    let data = &buf[..frame.buffer_size()];
    let line = frame.line_size;
    let channels = match frame.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err("unexpanded palette image".into()),
    };
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let row = &data[y * line..y * line + w * channels];
        for px in row.chunks_exact(channels) {
            pixels.push(match channels {
                1 | 2 => px[0],
                _ => luminance(px[0], px[1], px[2]),
            });
        }
    }
    GrayImage::new(w, h, pixels).map_err(|e| e.to_string())
}

/// Encodes as binary (`P5`) or ASCII (`P2`) PGM with maxval 255.
pub fn encode_pgm(img: &GrayImage, ascii: bool) -> Vec<u8> {
    let mut out = format!("{}\n{} {}\n255\n", if ascii { "P2" } else { "P5" }, img.width, img.height).into_bytes();
    if ascii {
        for row in img.pixels.chunks(img.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        out.extend_from_slice(&img.pixels);
    }
    out
}

pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    crate::util::atomic_write(path.as_ref(), &encode_pgm(img, false))
}

/// Writes an 8-bit grayscale PNG.
pub fn write_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    crate::util::atomic_write(path.as_ref(), &encode_png_gray(img)?)
}

pub fn encode_png_gray(img: &GrayImage) -> Result<Vec<u8>> {
    encode_png(img.width as u32, img.height as u32, png::ColorType::Grayscale, &img.pixels)
}

/// Encodes an 8-bit RGB PNG from interleaved samples.
pub fn encode_png_rgb(width: u32, height: u32, rgb: &[u8]) -> Result<Vec<u8>> {
    encode_png(width, height, png::ColorType::Rgb, rgb)
}

fn encode_png(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width, height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| Error::Internal(format!("png: {e}")))?;
        w.write_image_data(data).map_err(|e| Error::Internal(format!("png: {e}")))?;
    }
    Ok(out)
}

fn between_class_variance(w0: u64, s0: u64, w1: u64, s1: u64) -> f64 {
    if w0 == 0 || w1 == 0 {
        return 0.0;
    }
    let d = s0 as i128 * w1 as i128 - s1 as i128 * w0 as i128;
    let d = d as f64;
    d * d / (w0 as f64 * w1 as f64)
}

/// Otsu's threshold over the 256-bin histogram.
///
/// Returns the level `t` maximizing the between-class variance of the split
/// `{<= t} | {> t}`; ties go to the smallest `t`. A histogram with a single
/// populated bin returns that intensity, which binarizes to an empty grid.
pub fn otsu_threshold(img: &GrayImage) -> u8 {
    let mut hist = [0u64; 256];
    for &p in &img.pixels {
        hist[p as usize] += 1;
    }
    let total: u64 = hist.iter().sum();
    let sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();

    let mut best_t = 0u8;
    let mut best_var = 0.0f64;
    let (mut w0, mut s0) = (0u64, 0u64);
    for t in 0..256usize {
        w0 += hist[t];
        s0 += t as u64 * hist[t];
        let var = between_class_variance(w0, s0, total - w0, sum - s0);
        if var > best_var {
            best_var = var;
            best_t = t as u8;
        }
    }
    if best_var == 0.0 {
        // single populated bin
        return img.pixels[0];
    }
    best_t
}

/// Cells strictly brighter than `thr` are occupied.
pub fn binarize(img: &GrayImage, thr: u8) -> BinaryGrid {
    BinaryGrid {
        width: img.width,
        height: img.height,
        occupied: img.pixels.iter().map(|&p| p > thr).collect(),
    }
}

/// Smallest power of two that is `>= n` (1 for n = 0).
pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Embeds the grid at the origin of an unoccupied square whose side is the
/// next power of two of the larger dimension.
pub fn pad_to_square_pow2(grid: &BinaryGrid) -> BinaryGrid {
    let side = next_pow2(grid.width.max(grid.height));
    if side == grid.width && side == grid.height {
        return grid.clone();
    }
    let mut out = BinaryGrid::empty(side, side);
    for y in 0..grid.height {
        let src = &grid.occupied[y * grid.width..(y + 1) * grid.width];
        out.occupied[y * side..y * side + grid.width].copy_from_slice(src);
    }
    out
}

/// Nearest-neighbour resampling to `side`×`side`.
pub fn downsample_nearest(img: &GrayImage, side: usize) -> Result<GrayImage> {
    if side == 0 {
        return Err(Error::InvalidArgument("downsample target must be positive".into()));
    }
    GrayImage::from_fn(side, side, |x, y| img.get(x * img.width / side, y * img.height / side))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train, val or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: u32,
    pub split: Split,
}

/// Validated list of labelled images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    num_classes: usize,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> std::result::Result<Self, String> {
        if entries.iter().any(|e| e.path.as_os_str().is_empty()) {
            return Err("empty image path".into());
        }
        if !entries.iter().any(|e| e.split == Split::Train) {
            return Err("manifest has no train entries".into());
        }
        let labels: BTreeSet<u32> = entries.iter().map(|e| e.label).collect();
        let num_classes = labels.len();
        if let Some((i, l)) = labels.iter().enumerate().find(|(i, l)| **l as usize != *i) {
            return Err(format!("labels are not contiguous from 0: missing {i} (next label is {l})"));
        }
        Ok(Self { entries, num_classes })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Reads a `path,label,split` CSV. Relative image paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let err = |msg: String| Error::Manifest { path: path.to_path_buf(), msg };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));

    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| err(format!("missing column {name:?}")))
    };
    let (pc, lc, sc) = (col("path")?, col("label")?, col("split")?);

    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = i + 2;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let raw = field(pc);
        if raw.is_empty() {
            return Err(err(format!("line {line}: empty path")));
        }
        let label: u32 = field(lc)
            .parse()
            .map_err(|_| err(format!("line {line}: label {:?} is not a non-negative integer", field(lc))))?;
        let split: Split = field(sc).parse().map_err(|e| err(format!("line {line}: {e}")))?;
        let p = Path::new(raw);
        let resolved = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        entries.push(ManifestEntry { path: resolved, label, split });
    }
    DatasetManifest::new(entries).map_err(err)
}

/// Serializes a manifest with paths written as given.
pub fn manifest_to_csv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("path,label,split\n");
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.path.display(), e.label, e.split));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_otsu(img: &GrayImage) -> u8 {
        let mut best = (0u8, 0.0f64);
        for t in 0..=255u8 {
            let (mut w0, mut s0, mut w1, mut s1) = (0u64, 0u64, 0u64, 0u64);
            for &p in img.pixels() {
                if p <= t {
                    w0 += 1;
                    s0 += p as u64;
                } else {
                    w1 += 1;
                    s1 += p as u64;
                }
            }
            let v = between_class_variance(w0, s0, w1, s1);
            if v > best.1 {
                best = (t, v);
            }
        }
        if best.1 == 0.0 {
            img.pixels()[0]
        } else {
            best.0
        }
    }

    #[test]
    fn pgm_p2_decode() {
        let img = decode_gray_image(b"P2\n# c\n2 2\n255\n0 255\n255 0\n").unwrap();
        assert_eq!(img.pixels(), &[0, 255, 255, 0]);
    }

    #[test]
    fn pgm_roundtrip_both_encodings() {
        let img = GrayImage::from_fn(7, 3, |x, y| (x * 31 + y * 17) as u8).unwrap();
        for ascii in [false, true] {
            assert_eq!(decode_gray_image(&encode_pgm(&img, ascii)).unwrap(), img);
        }
    }

    #[test]
    fn pgm_rejects_16bit() {
        let err = decode_gray_image(b"P5\n1 1\n65535\n\0\0").unwrap_err();
        assert!(err.contains("bit depth"), "{err}");
    }

    #[test]
    fn png_white_rgb() {
        let bytes = encode_png_rgb(3, 2, &[255; 18]).unwrap();
        let img = decode_gray_image(&bytes).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 255));
    }

    #[test]
    fn png_primary_luminance() {
        // 0.299*255 = 76.245, 0.587*255 = 149.685, 0.114*255 = 29.07
        let bytes = encode_png_rgb(3, 1, &[255, 0, 0, 0, 255, 0, 0, 0, 255]).unwrap();
        assert_eq!(decode_gray_image(&bytes).unwrap().pixels(), &[76, 150, 29]);
    }

    #[test]
    fn png_gray_roundtrip() {
        let img = GrayImage::from_fn(5, 4, |x, y| (x * 50 + y) as u8).unwrap();
        assert_eq!(decode_gray_image(&encode_png_gray(&img).unwrap()).unwrap(), img);
    }

    #[test]
    fn load_reports_path() {
        let err = load_gray_image("/nonexistent/img.pgm").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/img.pgm"));
    }

    #[test]
    fn otsu_bimodal_separates_populations() {
        let img = GrayImage::new(4, 1, vec![0, 255, 0, 255]).unwrap();
        let t = otsu_threshold(&img);
        assert_eq!(binarize(&img, t).cells(), &[false, true, false, true]);
    }

    #[test]
    fn otsu_constant_is_empty() {
        let img = GrayImage::filled(3, 3, 77).unwrap();
        assert_eq!(otsu_threshold(&img), 77);
        assert_eq!(binarize(&img, 77).count_occupied(), 0);
    }

    #[test]
    fn otsu_ramp_matches_brute_force() {
        let img = GrayImage::new(8, 1, vec![0, 32, 64, 96, 128, 160, 192, 224]).unwrap();
        // symmetric ramp: the brute-force maximiser splits 4|4 at the first level >= 96
        assert_eq!(brute_otsu(&img), 96);
        assert_eq!(otsu_threshold(&img), 96);
    }

    #[test]
    fn binarize_examples() {
        let img = GrayImage::new(2, 2, vec![0, 255, 255, 0]).unwrap();
        assert_eq!(binarize(&img, 128).cells(), &[false, true, true, false]);
        assert_eq!(binarize(&img, 255).count_occupied(), 0);
        let img = GrayImage::new(3, 1, vec![0, 1, 2]).unwrap();
        assert_eq!(binarize(&img, 0).cells(), &[false, true, true]);
    }

    #[test]
    fn padding_examples() {
        let g = BinaryGrid::from_fn(5, 3, |x, y| (x + y) % 2 == 0);
        let p = pad_to_square_pow2(&g);
        assert_eq!((p.width(), p.height()), (8, 8));
        for y in 0..8 {
            for x in 0..8 {
                let want = x < 5 && y < 3 && g.get(x, y);
                assert_eq!(p.get(x, y), want);
            }
        }
        let g = BinaryGrid::from_fn(8, 8, |x, _| x == 3);
        assert_eq!(pad_to_square_pow2(&g), g);
        assert_eq!(pad_to_square_pow2(&BinaryGrid::empty(9, 9)).width(), 16);
    }

    #[test]
    fn downsample_picks_nearest() {
        let img = GrayImage::from_fn(4, 4, |x, y| (y * 4 + x) as u8).unwrap();
        let d = downsample_nearest(&img, 2).unwrap();
        assert_eq!(d.pixels(), &[0, 2, 8, 10]);
    }

    fn write_manifest(body: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, body).unwrap();
        (dir, p)
    }

    #[test]
    fn manifest_two_classes() {
        let (dir, p) = write_manifest("path,label,split\na.pgm,0,train\nb.pgm,1,test\n");
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.num_classes(), 2);
        assert_eq!(m.entries()[0].path, dir.path().join("a.pgm"));
        assert_eq!(m.entries()[1].split, Split::Test);
    }

    #[test]
    fn manifest_errors() {
        let (_d, p) = write_manifest("path,label,split\na.pgm,0,train\nb.pgm,2,train\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("contiguous"));
        let (_d, p) = write_manifest("path,label,split\na.pgm,0,holdout\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("unknown split"));
        let (_d, p) = write_manifest("path,label\na.pgm,0\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("missing column"));
        let (_d, p) = write_manifest("path,label,split\na.pgm,x,train\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("not a non-negative integer"));
        let (_d, p) = write_manifest("path,label,split\n");
        assert!(load_manifest(&p).unwrap_err().to_string().contains("no train"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn image() -> impl Strategy<Value = GrayImage> {
            (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<u8>(), w * h).prop_map(move |px| GrayImage::new(w, h, px).unwrap())
            })
        }

        proptest! {
            #[test]
            fn otsu_equals_brute_force(img in image()) {
                prop_assert_eq!(otsu_threshold(&img), brute_otsu(&img));
            }

            #[test]
            fn binarize_monotone(img in image(), a in any::<u8>(), b in any::<u8>()) {
                let (lo, hi) = (a.min(b), a.max(b));
                let glo = binarize(&img, lo);
                let ghi = binarize(&img, hi);
                for (l, h) in glo.cells().iter().zip(ghi.cells()) {
                    prop_assert!(!h || *l);
                }
            }

            #[test]
            fn padding_preserves_occupancy(img in image(), t in any::<u8>()) {
                let g = binarize(&img, t);
                prop_assert_eq!(pad_to_square_pow2(&g).count_occupied(), g.count_occupied());
            }

            #[test]
            fn pgm_identity(img in image()) {
                prop_assert_eq!(decode_gray_image(&encode_pgm(&img, false)).unwrap(), img);
            }
        }
    }
}
