//! Binary cache for train-set Gram pairs, keyed by content hashes of the
//! inputs and the kernel-relevant configuration.
//!
//! Layout (all little-endian): 8-byte magic `ICBGRAM1`, u32 rows, u32 cols,
//! u64 dataset hash, u64 config hash, rows·cols f64 for K in row-major
//! order, then the same for Θ.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::{Activation, GramPair, NetConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"ICBGRAM1";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Content hash of an input matrix: dimensions plus every entry's bit
/// pattern in row-major order.
pub fn dataset_hash(x: &DMatrix<f64>) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &(x.nrows() as u64).to_le_bytes());
    h = fnv1a(h, &(x.ncols() as u64).to_le_bytes());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            h = fnv1a(h, &x[(i, j)].to_bits().to_le_bytes());
        }
    }
    h
}

/// Hash of the configuration fields that determine Gram matrices. Training
/// fields (lambda, eta, time) deliberately do not participate, so one cache
/// entry serves every training schedule on the same kernel.
pub fn kernel_cfg_hash(cfg: &NetConfig) -> u64 {
    let act = match cfg.activation {
        Activation::Relu => 0u8,
        Activation::Erf => 1,
        Activation::Linear => 2,
    };
    let mut h = fnv1a(FNV_OFFSET, &cfg.depth_l.to_le_bytes());
    h = fnv1a(h, &[act, cfg.readout_bias as u8]);
    h = fnv1a(h, &cfg.w_var.to_bits().to_le_bytes());
    h = fnv1a(h, &cfg.b_var.to_bits().to_le_bytes());
    h
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::BadCache {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

pub fn save_gram_pair(
    path: impl AsRef<Path>,
    pair: &GramPair,
    dataset_hash: u64,
    cfg_hash: u64,
) -> Result<()> {
    let path = path.as_ref();
    let n = pair.k.nrows();
    if pair.k.ncols() != n || pair.theta.nrows() != n || pair.theta.ncols() != n {
        return Err(Error::DimMismatch(format!(
            "gram pair must be square with equal dims, got K {}x{}, Theta {}x{}",
            pair.k.nrows(),
            pair.k.ncols(),
            pair.theta.nrows(),
            pair.theta.ncols()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(n as u32)?;
    w.write_u32::<LittleEndian>(n as u32)?;
    w.write_u64::<LittleEndian>(dataset_hash)?;
    w.write_u64::<LittleEndian>(cfg_hash)?;
    for m in [&pair.k, &pair.theta] {
        for i in 0..n {
            for j in 0..n {
                w.write_f64::<LittleEndian>(m[(i, j)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_gram_pair(
    path: impl AsRef<Path>,
    expect_dataset: u64,
    expect_cfg: u64,
) -> Result<GramPair> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| bad(path, "file shorter than the magic header"))?;
    if &magic != MAGIC {
        return Err(bad(
            path,
            format!("bad magic {magic:02x?}, expected {MAGIC:02x?}"),
        ));
    }
    let rows = r
        .read_u32::<LittleEndian>()
        .map_err(|_| bad(path, "truncated header"))? as usize;
    let cols = r
        .read_u32::<LittleEndian>()
        .map_err(|_| bad(path, "truncated header"))? as usize;
    if rows != cols {
        return Err(bad(path, format!("non-square dims {rows}x{cols}")));
    }
    let ds = r
        .read_u64::<LittleEndian>()
        .map_err(|_| bad(path, "truncated header"))?;
    let cf = r
        .read_u64::<LittleEndian>()
        .map_err(|_| bad(path, "truncated header"))?;
    if ds != expect_dataset {
        return Err(bad(
            path,
            format!("dataset hash {ds:#018x} does not match expected {expect_dataset:#018x}"),
        ));
    }
    if cf != expect_cfg {
        return Err(bad(
            path,
            format!("config hash {cf:#018x} does not match expected {expect_cfg:#018x}"),
        ));
    }
    let mut read_matrix = || -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = r
                    .read_f64::<LittleEndian>()
                    .map_err(|_| bad(path, format!("payload truncated at entry ({i},{j})")))?;
            }
        }
        Ok(m)
    };
    let k = read_matrix()?;
    let theta = read_matrix()?;
    Ok(GramPair { k, theta })
}
