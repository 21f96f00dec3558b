//! Softmax cross-entropy and the re-weighted softmax (WSM) loss.
//!
//! For logits `z` and label `y`:
//!
//! ```text
//! CE  = -(z_y - log sum_c exp(z_c))
//! WSM = -(z_y - log sum_c beta_c exp(z_c))
//! ```
//!
//! Both are averaged over the batch. Classes with `beta_c = 0` are dropped from
//! the WSM sum outright; the log-sum-exp is stabilised by subtracting the max
//! over the classes that remain.

use serde::{Deserialize, Serialize};

use super::matrix::{LabeledBatch, Matrix};
use super::model::{backprop, forward, ForwardCache, ModelParams};
use crate::error::{Error, Result};

/// Per-client class proportions `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    beta: Vec<f64>,
}

impl ClassWeights {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::config("class weights must not be empty"));
        }
        if beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::config("class weights must lie in [0, 1]"));
        }
        let sum: f64 = beta.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("class weights sum to {sum}, expected 1")));
        }
        Ok(Self { beta })
    }

    /// Empirical label frequencies: `beta_c = count(c) / len`.
    pub fn from_labels(labels: &[usize], num_classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::config("cannot compute class weights of an empty label set"));
        }
        let mut counts = vec![0usize; num_classes];
        for &y in labels {
            if y >= num_classes {
                return Err(Error::config(format!("label {y} out of range for {num_classes} classes")));
            }
            counts[y] += 1;
        }
        let n = labels.len() as f64;
        Self::new(counts.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self {
            beta: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }
}

/// Which local objective a client optimises.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    CrossEntropy,
    Wsm(ClassWeights),
}

fn check_labels(logits: &Matrix, labels: &[usize]) -> Result<()> {
    if logits.rows() != labels.len() {
        return Err(Error::config(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::config("loss of an empty batch is undefined"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= logits.cols()) {
        return Err(Error::config(format!("label {bad} out of range for {} classes", logits.cols())));
    }
    Ok(())
}

fn check_weights(logits: &Matrix, labels: &[usize], weights: &ClassWeights) -> Result<()> {
    if weights.len() != logits.cols() {
        return Err(Error::config(format!(
            "{} class weights for {} classes",
            weights.len(),
            logits.cols()
        )));
    }
    if let Some(&y) = labels.iter().find(|&&y| weights.beta[y] == 0.0) {
        return Err(Error::Invariant(format!(
            "label {y} has zero class weight; the shard's weights were not built from its labels"
        )));
    }
    Ok(())
}

/// `log sum_c exp(z_c)`.
fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log sum_{c: beta_c > 0} beta_c exp(z_c)`.
fn weighted_log_sum_exp(z: &[f64], beta: &[f64]) -> f64 {
    let m = z
        .iter()
        .zip(beta)
        .filter(|(_, &b)| b > 0.0)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = z
        .iter()
        .zip(beta)
        .filter(|(_, &b)| b > 0.0)
        .map(|(&v, &b)| b * (v - m).exp())
        .sum();
    m + s.ln()
}

/// Mean softmax cross-entropy.
pub fn loss_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(logits, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            let z = logits.row(b);
            log_sum_exp(z) - z[y]
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean re-weighted softmax loss. Can be negative: weights below one shrink
/// the denominator.
pub fn loss_wsm(logits: &Matrix, labels: &[usize], weights: &ClassWeights) -> Result<f64> {
    check_labels(logits, labels)?;
    check_weights(logits, labels, weights)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(b, &y)| {
            let z = logits.row(b);
            weighted_log_sum_exp(z, &weights.beta) - z[y]
        })
        .sum();
    Ok(total / labels.len() as f64)
}

pub fn loss(logits: &Matrix, labels: &[usize], kind: &LossKind) -> Result<f64> {
    match kind {
        LossKind::CrossEntropy => loss_ce(logits, labels),
        LossKind::Wsm(w) => loss_wsm(logits, labels, w),
    }
}

/// Gradient of the mean loss with respect to the logits.
///
/// CE: `softmax(z)_c - 1{c = y}`. WSM: `beta_c exp(z_c) / sum_j beta_j exp(z_j) - 1{c = y}`,
/// exactly zero wherever `beta_c = 0`. Rows are divided by the batch size.
pub fn logit_grad(logits: &Matrix, labels: &[usize], kind: &LossKind) -> Result<Matrix> {
    check_labels(logits, labels)?;
    if let LossKind::Wsm(w) = kind {
        check_weights(logits, labels, w)?;
    }
    let inv_b = 1.0 / labels.len() as f64;
    let mut g = Matrix::zeros(logits.rows(), logits.cols());
    for (b, &y) in labels.iter().enumerate() {
        let z = logits.row(b);
        let out = g.row_mut(b);
        match kind {
            LossKind::CrossEntropy => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for (o, &v) in out.iter_mut().zip(z) {
                    *o = (v - m).exp();
                    s += *o;
                }
                for o in out.iter_mut() {
                    *o /= s;
                }
            }
            LossKind::Wsm(w) => {
                let beta = &w.beta;
                let m = z
                    .iter()
                    .zip(beta)
                    .filter(|(_, &bc)| bc > 0.0)
                    .map(|(&v, _)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut s = 0.0;
                for ((o, &v), &bc) in out.iter_mut().zip(z).zip(beta) {
                    if bc > 0.0 {
                        *o = bc * (v - m).exp();
                        s += *o;
                    }
                }
                for (o, &bc) in out.iter_mut().zip(beta) {
                    if bc > 0.0 {
                        *o /= s;
                    }
                }
            }
        }
        out[y] -= 1.0;
        for o in out.iter_mut() {
            *o *= inv_b;
        }
    }
    Ok(g)
}

/// Parameter gradient of the mean loss, from a matching forward cache.
pub fn backward(params: &ModelParams, cache: &ForwardCache, labels: &[usize], kind: &LossKind) -> Result<ModelParams> {
    let g = logit_grad(cache.logits(), labels, kind)?;
    backprop(params, cache, g)
}

/// Forward pass, mean loss and its parameter gradient in one call.
pub fn loss_and_grad(params: &ModelParams, batch: &LabeledBatch, kind: &LossKind) -> Result<(f64, ModelParams)> {
    let cache = forward(params, batch.features())?;
    let l = loss(cache.logits(), batch.labels(), kind)?;
    let g = backward(params, &cache, batch.labels(), kind)?;
    Ok((l, g))
}
