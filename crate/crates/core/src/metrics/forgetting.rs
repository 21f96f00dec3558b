//! Accuracy and local client forgetting.
//!
//! For round `t`, with `w_{t-1}` the global model after the previous
//! aggregation and `w_t^i` client `i`'s model after local training (before
//! aggregation):
//!
//! ```text
//! F_ki = Acc_k(w_{t-1}) - Acc_k(w_t^i)        (positive = forgetting)
//! F_k  = mean over i != k of F_ki
//! ```
//!
//! `Acc_k` is measured on client `k`'s validation split. Only clients that
//! trained this round have a model, so the other columns are absent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{predict_logits, LabeledBatch, Matrix, ModelParams};
use crate::partition::DatasetShard;

/// Index of the largest entry, ties resolved to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose argmax logit equals the label.
pub fn accuracy_from_logits(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty batch".into()));
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(b, &y)| argmax(logits.row(b)) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn accuracy(model: &ModelParams, batch: &LabeledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::UndefinedMetric("accuracy of an empty batch".into()));
    }
    let logits = predict_logits(model, batch.features())?;
    accuracy_from_logits(&logits, batch.labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    /// `F_ki` values in `[-1, 1]`.
    Forgetting,
    /// `Acc_k(w_t^i)` values in `[0, 1]`.
    Accuracy,
}

/// `K x K` per-round grid indexed `[k][i]`: row `k` is client `k`'s data,
/// column `i` is client `i`'s model. `None` marks pairs that were not evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMatrix {
    pub round: usize,
    pub kind: MatrixKind,
    size: usize,
    cells: Vec<Option<f64>>,
}

pub type ForgettingMatrix = ClientMatrix;

impl ClientMatrix {
    pub fn empty(round: usize, kind: MatrixKind, size: usize) -> Self {
        Self {
            round,
            kind,
            size,
            cells: vec![None; size * size],
        }
    }

    pub fn from_rows(round: usize, kind: MatrixKind, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let size = rows.len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::config("client matrix must be square"));
        }
        Ok(Self {
            round,
            kind,
            size,
            cells: rows.into_iter().flatten().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Value for data client `k` and model client `i`.
    pub fn get(&self, k: usize, i: usize) -> Option<f64> {
        self.cells[k * self.size + i]
    }

    pub fn set(&mut self, k: usize, i: usize, v: Option<f64>) {
        self.cells[k * self.size + i] = v;
    }

    pub fn row(&self, k: usize) -> &[Option<f64>] {
        &self.cells[k * self.size..(k + 1) * self.size]
    }

    /// Model columns that hold at least one value.
    pub fn present_models(&self) -> Vec<usize> {
        (0..self.size)
            .filter(|&i| (0..self.size).any(|k| self.get(k, i).is_some()))
            .collect()
    }
}

/// Accuracy of every client model on every client's validation split.
/// Clients with an empty validation split get an absent row.
pub fn client_accuracy_grid(
    round: usize,
    client_models: &[(usize, &ModelParams)],
    shards: &[DatasetShard],
) -> Result<ClientMatrix> {
    let k = shards.len();
    let mut grid = ClientMatrix::empty(round, MatrixKind::Accuracy, k);
    let cells: Vec<(usize, usize, Option<f64>)> = {
        let pairs: Vec<(usize, usize)> = client_models
            .iter()
            .enumerate()
            .flat_map(|(mi, _)| (0..k).map(move |d| (mi, d)))
            .collect();
        let eval = |&(mi, d): &(usize, usize)| -> Result<(usize, usize, Option<f64>)> {
            let (id, model) = client_models[mi];
            let val = &shards[d].val;
            let acc = if val.is_empty() { None } else { Some(accuracy(model, val)?) };
            Ok((d, id, acc))
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            pairs.par_iter().map(eval).collect::<Result<_>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            pairs.iter().map(eval).collect::<Result<_>>()?
        }
    };
    for (d, id, acc) in cells {
        if id >= k {
            return Err(Error::config(format!("client id {id} out of range for {k} shards")));
        }
        grid.set(d, id, acc);
    }
    Ok(grid)
}

/// Per-client accuracy of one model on the validation splits (`None` for empty splits).
pub fn accuracy_vector(model: &ModelParams, shards: &[DatasetShard]) -> Result<Vec<Option<f64>>> {
    shards
        .iter()
        .map(|s| if s.val.is_empty() { Ok(None) } else { accuracy(model, &s.val).map(Some) })
        .collect()
}

/// `F[k][i] = prev_acc[k] - grid[k][i]` wherever both are known.
pub fn forgetting_from_accuracies(prev_acc: &[Option<f64>], grid: &ClientMatrix) -> Result<ForgettingMatrix> {
    if prev_acc.len() != grid.size() {
        return Err(Error::config("previous accuracy vector does not match grid size"));
    }
    let mut f = ClientMatrix::empty(grid.round, MatrixKind::Forgetting, grid.size());
    for (k, prev) in prev_acc.iter().enumerate() {
        for i in 0..grid.size() {
            if let (Some(p), Some(a)) = (prev, grid.get(k, i)) {
                f.set(k, i, Some(p - a));
            }
        }
    }
    Ok(f)
}

/// Forgetting of each participating client model with respect to the previous
/// global model, evaluated on all clients' validation data.
pub fn forgetting_matrix(
    round: usize,
    prev_global: &ModelParams,
    client_models: &[(usize, &ModelParams)],
    shards: &[DatasetShard],
) -> Result<ForgettingMatrix> {
    let prev = accuracy_vector(prev_global, shards)?;
    let grid = client_accuracy_grid(round, client_models, shards)?;
    forgetting_from_accuracies(&prev, &grid)
}

/// `F_k = (1 / |I_k|) sum_{i in I_k} F_ki` where `I_k` are the evaluated models
/// other than `k`; with full participation `|I_k| = K - 1`. `None` when `I_k` is empty.
pub fn average_forgetting(f: &ForgettingMatrix) -> Result<Vec<Option<f64>>> {
    if f.size() < 2 {
        return Err(Error::UndefinedMetric("average forgetting needs at least two clients".into()));
    }
    Ok((0..f.size())
        .map(|k| {
            let (sum, n) = (0..f.size())
                .filter(|&i| i != k)
                .filter_map(|i| f.get(k, i))
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        })
        .collect())
}

/// Mean of the defined entries.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let (sum, n) = values.iter().flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
