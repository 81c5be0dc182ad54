//! Generic CSV ingestion: header row, one label column, numeric features.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use super::{DatasetMeta, RawDataset};

/// Load a CSV with a header row into a raw dataset. `label_column` names the
/// class-id column; every other column must parse as a real number. The
/// native feature range is the global (min, max) over all feature cells,
/// recorded in the metadata so task construction can rescale to [-1, 1].
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<RawDataset> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;

    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::ParseError {
            row: 0,
            col: "-".into(),
            msg: "no header row".into(),
        });
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();
    let d = feature_names.len();

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;

    for (row_i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_i + 1; // 1-based data row, header is row 0
        for (col_i, cell) in record.iter().enumerate() {
            if col_i == label_idx {
                let v: f64 = cell.trim().parse().map_err(|_| Error::ParseError {
                    row,
                    col: label_column.to_string(),
                    msg: format!("label {cell:?} is not a number"),
                })?;
                if v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(Error::ParseError {
                        row,
                        col: label_column.to_string(),
                        msg: format!("label {cell:?} is not an integer class id"),
                    });
                }
                labels.push(v as u8);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| Error::ParseError {
                    row,
                    col: headers.get(col_i).unwrap_or("?").to_string(),
                    msg: format!("{cell:?} is not a number"),
                })?;
                lo = lo.min(v);
                hi = hi.max(v);
                features.push(v);
            }
        }
    }

    let n = labels.len();
    if n == 0 {
        // header-only files carry no range information
        lo = -1.0;
        hi = 1.0;
    }
    let inputs = DMatrix::from_fn(n, d, |i, j| features[i * d + j]);
    let n_classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    RawDataset::new(
        inputs,
        labels,
        DatasetMeta {
            source: path.display().to_string(),
            image_shape: None,
            native_range: (lo, hi),
            n_classes,
        },
    )
}
