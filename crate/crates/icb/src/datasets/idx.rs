//! IDX binary ingestion (big-endian magic + dims + ubyte payload).

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use super::{DatasetMeta, RawDataset};

/// Magic word of an unsigned-byte rank-3 tensor (image stack).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic word of an unsigned-byte rank-1 tensor (label vector).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_magic(r: &mut impl Read, path: &Path, expected: u32) -> Result<()> {
    let found = r.read_u32::<BigEndian>().map_err(|_| Error::Truncated {
        path: path.display().to_string(),
        expected: 4,
        found: 0,
    })?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

fn read_payload(r: &mut impl Read, path: &Path, expected: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(expected);
    r.take(expected as u64).read_to_end(&mut buf)?;
    if buf.len() < expected {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            expected,
            found: buf.len(),
        });
    }
    Ok(buf)
}

/// Load an (images, labels) IDX pair into a raw dataset with pixel values
/// widened to reals in [0, 255].
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawDataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let mut ir = BufReader::new(File::open(images_path)?);
    read_magic(&mut ir, images_path, IDX_IMAGES_MAGIC)?;
    let n = ir.read_u32::<BigEndian>()? as usize;
    let rows = ir.read_u32::<BigEndian>()? as usize;
    let cols = ir.read_u32::<BigEndian>()? as usize;
    let d = rows * cols;
    let pixels = read_payload(&mut ir, images_path, n * d)?;

    let mut lr = BufReader::new(File::open(labels_path)?);
    read_magic(&mut lr, labels_path, IDX_LABELS_MAGIC)?;
    let n_labels = lr.read_u32::<BigEndian>()? as usize;
    let labels = read_payload(&mut lr, labels_path, n_labels)?;

    if n != n_labels {
        return Err(Error::DimMismatch(format!(
            "{} has {n} images but {} has {n_labels} labels",
            images_path.display(),
            labels_path.display()
        )));
    }

    let inputs = DMatrix::from_fn(n, d, |i, j| pixels[i * d + j] as f64);
    let n_classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    RawDataset::new(
        inputs,
        labels,
        DatasetMeta {
            source: images_path.display().to_string(),
            image_shape: Some((rows, cols)),
            native_range: (0.0, 255.0),
            n_classes,
        },
    )
}
