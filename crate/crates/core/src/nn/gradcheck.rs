//! Central finite-difference checks of the analytic gradients.

use rand::Rng;

use super::loss::{loss, loss_and_grad, ClassWeights, LossKind};
use super::matrix::{LabeledBatch, Matrix};
use super::model::{forward, mlp_shapes, ModelParams};
use crate::error::Result;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `max_j |a_j - n_j| / max(|a_j|, |n_j|, floor)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coords: usize,
}

/// Compares the analytic gradient of the mean loss with central differences of step `h`.
pub fn check_gradient(params: &ModelParams, batch: &LabeledBatch, kind: &LossKind, h: f64, floor: f64) -> Result<GradCheck> {
    let (_, analytic) = loss_and_grad(params, batch, kind)?;
    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for j in 0..params.len() {
        let w = params.as_slice()[j];
        probe.as_mut_slice()[j] = w + h;
        let up = loss(&forward(&probe, batch.features())?.into_logits(), batch.labels(), kind)?;
        probe.as_mut_slice()[j] = w - h;
        let down = loss(&forward(&probe, batch.features())?.into_logits(), batch.labels(), kind)?;
        probe.as_mut_slice()[j] = w;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.as_slice()[j];
        let abs = (a - numeric).abs();
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / a.abs().max(numeric.abs()).max(floor));
    }
    Ok(GradCheck {
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        coords: params.len(),
    })
}

/// A random small network, batch and class-weight vector for gradient checks.
#[derive(Debug, Clone)]
pub struct GradCase {
    pub params: ModelParams,
    pub batch: LabeledBatch,
    /// Has at least one zero entry whenever `C >= 3`.
    pub beta: ClassWeights,
}

/// Draws a network with 1 to 3 layers and at most 20 units per layer, a batch of
/// 1 to 8 rows whose labels all have positive weight, and a class-weight vector.
///
/// Cases where some hidden pre-activation lies within `kink_margin` of zero are
/// redrawn so that a step of `h` cannot cross a ReLU kink.
pub fn random_case<R: Rng + ?Sized>(rng: &mut R, kink_margin: f64) -> Result<GradCase> {
    loop {
        let input = rng.random_range(1..=8);
        let classes = rng.random_range(2..=6);
        let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(1..=20)).collect();
        let mut params = ModelParams::init_glorot(mlp_shapes(input, &hidden, classes), rng)?;
        for l in 0..params.num_layers() {
            for b in params.biases_mut(l) {
                *b = rng.random_range(-0.5..0.5);
            }
        }

        let mut raw: Vec<f64> = (0..classes).map(|_| rng.random_range(0.05..1.0)).collect();
        if classes >= 3 {
            let zeros = rng.random_range(1..classes - 1);
            for _ in 0..zeros {
                let c = rng.random_range(0..classes);
                raw[c] = 0.0;
            }
            if raw.iter().all(|&v| v == 0.0) {
                raw[0] = 1.0;
            }
        }
        let total: f64 = raw.iter().sum();
        let mut beta: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let last = beta.iter().rposition(|&v| v > 0.0).expect("one positive entry");
        beta[last] = 0.0;
        beta[last] = 1.0 - beta.iter().sum::<f64>();
        let beta = ClassWeights::new(beta)?;
        let present: Vec<usize> = (0..classes).filter(|&c| beta.as_slice()[c] > 0.0).collect();

        let rows = rng.random_range(1..=8);
        let x: Vec<f64> = (0..rows * input).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<usize> = (0..rows).map(|_| present[rng.random_range(0..present.len())]).collect();
        let batch = LabeledBatch::new(Matrix::new(rows, input, x)?, labels, classes)?;

        let cache = forward(&params, batch.features())?;
        let near_kink = cache.pre[..cache.pre.len() - 1]
            .iter()
            .any(|m| m.data().iter().any(|z| z.abs() < kink_margin));
        if !near_kink {
            return Ok(GradCase { params, batch, beta });
        }
    }
}
