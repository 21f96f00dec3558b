//! Numeric CSV datasets with a header row.

use std::path::Path;

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{LabeledBatch, Matrix};

/// Loads a rectangular numeric CSV. Every column other than `label_column`
/// is a feature. Labels are re-indexed densely to `0..C` in ascending order of
/// their numeric value. The test split is left empty.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| Error::config(format!("label column `{label_column}` not found in {}", path.display())))?;
    let dim = headers.len() - 1;

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (i, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse_at_line(path, line, format!("non-numeric value `{cell}` in column `{}`", &headers[i]))
            })?;
            if !v.is_finite() {
                return Err(Error::parse_at_line(path, line, format!("non-finite value `{cell}`")));
            }
            if i == label_idx {
                raw_labels.push(v);
            } else {
                features.push(v);
            }
        }
    }

    let mut distinct = raw_labels.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|v| distinct.binary_search_by(|d| d.total_cmp(v)).expect("label present"))
        .collect();
    let num_classes = distinct.len().max(1);
    let n = labels.len();
    let train = LabeledBatch::new(Matrix::new(n, dim, features)?, labels, num_classes)?;
    Dataset::new(train, LabeledBatch::empty(dim), num_classes)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
        _ => Error::parse_at_line(path, line.unwrap_or(0), e.to_string()),
    }
}
