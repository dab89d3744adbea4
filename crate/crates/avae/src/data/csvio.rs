//! CSV ingestion: one row per timestep or sample, numeric feature columns,
//! final column the integer class label. A non-numeric first row is treated
//! as a header and skipped.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn cell_error(path: &Path, offset: u64, row: usize, col: usize, detail: String) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        detail: format!("row {}, column {}: {}", row, col, detail),
    }
}

fn parse_label(cell: &str) -> std::result::Result<usize, String> {
    let x: f64 = cell
        .trim()
        .parse()
        .map_err(|_| format!("label {:?} is not numeric", cell))?;
    if !x.is_finite() || x < 0.0 || x.fract() != 0.0 {
        return Err(format!("label {:?} is not a non-negative integer", cell));
    }
    Ok(x as usize)
}

/// Reads features, labels, and the class count `K = max label + 1`.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Tensor, Vec<usize>, usize)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            detail: e.to_string(),
        })?;

    let mut width = None;
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut data_rows = 0usize;

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format {
            path: path.to_path_buf(),
            offset: e.position().map_or(0, |p| p.byte()),
            detail: e.to_string(),
        })?;
        let offset = record.position().map_or(0, |p| p.byte());
        let cols = record.len();
        if cols < 2 {
            return Err(cell_error(
                path,
                offset,
                row,
                0,
                format!("need at least one feature column plus a label, got {} columns", cols),
            ));
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(cell_error(
                    path,
                    offset,
                    row,
                    0,
                    format!("expected {} columns, got {}", w, cols),
                ));
            }
            _ => {}
        }
        // Header heuristic: a first row with any non-numeric cell.
        if row == 0 && record.iter().any(|c| c.trim().parse::<f64>().is_err()) {
            width = None;
            continue;
        }
        for (col, cell) in record.iter().take(cols - 1).enumerate() {
            let x: f64 = cell.trim().parse().map_err(|_| {
                cell_error(path, offset, row, col, format!("{:?} is not numeric", cell))
            })?;
            features.push(x);
        }
        labels.push(
            parse_label(&record[cols - 1])
                .map_err(|d| cell_error(path, offset, row, cols - 1, d))?,
        );
        data_rows += 1;
    }

    if data_rows == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            detail: "no data rows".into(),
        });
    }
    let c = features.len() / data_rows;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Ok((Tensor::new(vec![data_rows, c], features)?, labels, k))
}
