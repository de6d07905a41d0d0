//! `ACTM` activation files.
//!
//! Layout (little-endian): magic `ACTM`, `u8` version (1), `u32` n, `u32` p,
//! `u32` byte length of the UTF-8 layer name followed by the name, then
//! `n*p` `f32` values row-major.
//!
//! A directory of `*.actm` files is a network dump, read in filename order.
//! If the directory holds an `index.txt`, its non-empty lines name the files
//! to read, in that order.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::ActivationMatrix;
use crate::error::{Error, Result};
use crate::features::LeReader;
use crate::util::atomic_write;

pub const ACTM_VERSION: u8 = 1;
const MAGIC: &[u8; 4] = b"ACTM";

pub fn encode_actm(m: &ActivationMatrix) -> Vec<u8> {
    let v = m.values();
    let name = m.layer_name().as_bytes();
    let mut out = Vec::with_capacity(17 + name.len() + 4 * v.len());
    out.extend_from_slice(MAGIC);
    out.push(ACTM_VERSION);
    out.extend_from_slice(&(v.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(v.ncols() as u32).to_le_bytes());
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name);
    for i in 0..v.nrows() {
        for j in 0..v.ncols() {
            out.extend_from_slice(&(v[(i, j)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_actm(bytes: &[u8]) -> std::result::Result<ActivationMatrix, String> {
    let mut r = LeReader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic (expected ACTM)".into());
    }
    let version = r.u8()?;
    if version != ACTM_VERSION {
        return Err(format!("unsupported ACTM version {version}"));
    }
    let n = r.u32()? as usize;
    let p = r.u32()? as usize;
    let name_len = r.u32()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| "layer name is not UTF-8")?.to_string();
    let count = n.checked_mul(p).ok_or("n*p overflow")?;
    if bytes.len() - r.pos != 4 * count {
        return Err(format!("expected {} value bytes, found {}", 4 * count, bytes.len() - r.pos));
    }
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(f32::from_bits(r.u32()?) as f64);
    }
    ActivationMatrix::new(name, DMatrix::from_row_slice(n, p, &data)).map_err(|e| e.to_string())
}

pub fn write_actm(m: &ActivationMatrix, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), &encode_actm(m))
}

pub fn read_actm(path: impl AsRef<Path>) -> Result<ActivationMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_actm(&bytes).map_err(|m| Error::decode(path, m))
}

/// Reads every layer of a network dump directory.
pub fn load_dump(dir: impl AsRef<Path>) -> Result<Vec<ActivationMatrix>> {
    let dir = dir.as_ref();
    let index = dir.join("index.txt");
    let files: Vec<PathBuf> = if index.is_file() {
        fs::read_to_string(&index)
            .map_err(|e| Error::io(&index, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| dir.join(l))
            .collect()
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "actm"))
            .collect();
        v.sort();
        v
    };
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .actm files in {}", dir.display())));
    }
    files.iter().map(read_actm).collect()
}
