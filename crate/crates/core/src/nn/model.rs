//! Dense feed-forward network parameters and the forward/backward passes.
//!
//! Parameters live in one flat vector so that averaging, SGD and the control
//! variates of SCAFFOLD are plain vector arithmetic. Layer `l` occupies
//! `fan_out * fan_in` weights (row-major, `[fan_out x fan_in]`) followed by
//! `fan_out` biases. Hidden layers use ReLU; the last layer is linear and
//! produces the logits.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub fan_in: usize,
    pub fan_out: usize,
}

impl LayerShape {
    fn len(&self) -> usize {
        self.fan_out * self.fan_in + self.fan_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shapes: Vec<LayerShape>,
    values: Vec<f64>,
}

/// Shapes of an MLP `input -> hidden[0] -> ... -> classes`. Empty `hidden`
/// gives multinomial logistic regression.
pub fn mlp_shapes(input_dim: usize, hidden: &[usize], num_classes: usize) -> Vec<LayerShape> {
    let mut dims = Vec::with_capacity(hidden.len() + 2);
    dims.push(input_dim);
    dims.extend_from_slice(hidden);
    dims.push(num_classes);
    dims.windows(2)
        .map(|w| LayerShape {
            fan_in: w[0],
            fan_out: w[1],
        })
        .collect()
}

fn validate_shapes(shapes: &[LayerShape]) -> Result<()> {
    if shapes.is_empty() {
        return Err(Error::config("model needs at least one layer"));
    }
    for (l, s) in shapes.iter().enumerate() {
        if s.fan_in == 0 || s.fan_out == 0 {
            return Err(Error::config(format!("layer {l} has a zero dimension")));
        }
    }
    for (l, w) in shapes.windows(2).enumerate() {
        if w[0].fan_out != w[1].fan_in {
            return Err(Error::config(format!(
                "layer {} fan_out {} does not match layer {} fan_in {}",
                l,
                w[0].fan_out,
                l + 1,
                w[1].fan_in
            )));
        }
    }
    Ok(())
}

impl ModelParams {
    pub fn zeros(shapes: Vec<LayerShape>) -> Result<Self> {
        validate_shapes(&shapes)?;
        let n = shapes.iter().map(LayerShape::len).sum();
        Ok(Self {
            shapes,
            values: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`;
    /// zero biases.
    pub fn init_glorot<R: Rng + ?Sized>(shapes: Vec<LayerShape>, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(shapes)?;
        for l in 0..p.shapes.len() {
            let s = p.shapes[l];
            let a = (6.0 / (s.fan_in + s.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            for w in p.weights_mut(l) {
                *w = dist.sample(rng);
            }
        }
        Ok(p)
    }

    pub fn from_flat(shapes: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        validate_shapes(&shapes)?;
        let n: usize = shapes.iter().map(LayerShape::len).sum();
        if values.len() != n {
            return Err(Error::config(format!(
                "flat parameter vector has {} values, layout needs {n}",
                values.len()
            )));
        }
        Ok(Self { shapes, values })
    }

    /// A zero vector with the same layout.
    pub fn zeros_like(&self) -> Self {
        Self {
            shapes: self.shapes.clone(),
            values: vec![0.0; self.values.len()],
        }
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn num_layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn input_dim(&self) -> usize {
        self.shapes[0].fan_in
    }

    pub fn num_classes(&self) -> usize {
        self.shapes[self.shapes.len() - 1].fan_out
    }

    pub fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.shapes.len() {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn same_layout(&self, other: &ModelParams) -> bool {
        self.shapes == other.shapes
    }

    fn offset(&self, layer: usize) -> usize {
        self.shapes[..layer].iter().map(LayerShape::len).sum()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let o = self.offset(layer);
        let s = self.shapes[layer];
        &self.values[o..o + s.fan_in * s.fan_out]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let o = self.offset(layer);
        let s = self.shapes[layer];
        &mut self.values[o..o + s.fan_in * s.fan_out]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let s = self.shapes[layer];
        let o = self.offset(layer) + s.fan_in * s.fan_out;
        &self.values[o..o + s.fan_out]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.shapes[layer];
        let o = self.offset(layer) + s.fan_in * s.fan_out;
        &mut self.values[o..o + s.fan_out]
    }

    fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.shapes[layer];
        let o = self.offset(layer);
        let (w, rest) = self.values[o..].split_at_mut(s.fan_in * s.fan_out);
        (w, &mut rest[..s.fan_out])
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Activations recorded by [`forward`] for an exact backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l` (post-activation of layer `l - 1`).
    pub inputs: Vec<Matrix>,
    /// `pre[l]` is `W_l x + b_l` before the activation. The last entry is the logits.
    pub pre: Vec<Matrix>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        self.pre.last().expect("at least one layer")
    }

    pub fn into_logits(mut self) -> Matrix {
        self.pre.pop().expect("at least one layer")
    }
}

fn affine(weights: &[f64], biases: &[f64], input: &Matrix, fan_out: usize) -> Matrix {
    let fan_in = input.cols();
    let mut out = Matrix::zeros(input.rows(), fan_out);
    for b in 0..input.rows() {
        let x = input.row(b);
        let o_row = out.row_mut(b);
        for (o, slot) in o_row.iter_mut().enumerate() {
            let w = &weights[o * fan_in..(o + 1) * fan_in];
            let mut acc = biases[o];
            for (wi, xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            *slot = acc;
        }
    }
    out
}

/// Runs the network on a `[B x D]` feature matrix.
pub fn forward(params: &ModelParams, features: &Matrix) -> Result<ForwardCache> {
    if features.cols() != params.input_dim() {
        return Err(Error::config(format!(
            "feature dimension {} does not match model input dimension {}",
            features.cols(),
            params.input_dim()
        )));
    }
    let n = params.num_layers();
    let mut inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    inputs.push(features.clone());
    for l in 0..n {
        let z = affine(params.weights(l), params.biases(l), &inputs[l], params.shapes[l].fan_out);
        if l + 1 < n {
            let mut a = z.clone();
            for v in a.data_mut() {
                *v = v.max(0.0);
            }
            inputs.push(a);
        }
        pre.push(z);
    }
    Ok(ForwardCache { inputs, pre })
}

/// Logits only, without keeping intermediate activations.
pub fn predict_logits(params: &ModelParams, features: &Matrix) -> Result<Matrix> {
    if features.cols() != params.input_dim() {
        return Err(Error::config(format!(
            "feature dimension {} does not match model input dimension {}",
            features.cols(),
            params.input_dim()
        )));
    }
    let n = params.num_layers();
    let mut cur = features.clone();
    for l in 0..n {
        let mut z = affine(params.weights(l), params.biases(l), &cur, params.shapes[l].fan_out);
        if l + 1 < n {
            for v in z.data_mut() {
                *v = v.max(0.0);
            }
        }
        cur = z;
    }
    Ok(cur)
}

/// Backpropagates an upstream logit gradient `d_logits` (`[B x C]`, already
/// scaled for the mean over the batch) through the cached activations.
pub fn backprop(params: &ModelParams, cache: &ForwardCache, d_logits: Matrix) -> Result<ModelParams> {
    let n = params.num_layers();
    if cache.pre.len() != n || d_logits.cols() != params.num_classes() || d_logits.rows() != cache.logits().rows() {
        return Err(Error::config("forward cache or logit gradient does not match the model"));
    }
    let mut grad = params.zeros_like();
    let mut delta = d_logits;
    for l in (0..n).rev() {
        let s = params.shapes[l];
        let input = &cache.inputs[l];
        {
            let (gw, gb) = grad.layer_mut(l);
            for b in 0..input.rows() {
                let x = input.row(b);
                let d = delta.row(b);
                for (o, &dv) in d.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    gb[o] += dv;
                    let row = &mut gw[o * s.fan_in..(o + 1) * s.fan_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += dv * xi;
                    }
                }
            }
        }
        if l == 0 {
            break;
        }
        let w = params.weights(l);
        let mut d_in = Matrix::zeros(input.rows(), s.fan_in);
        let pre_prev = &cache.pre[l - 1];
        for b in 0..input.rows() {
            let d = delta.row(b);
            let out = d_in.row_mut(b);
            for (o, &dv) in d.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                let row = &w[o * s.fan_in..(o + 1) * s.fan_in];
                for (acc, wi) in out.iter_mut().zip(row) {
                    *acc += dv * wi;
                }
            }
            for (acc, &z) in out.iter_mut().zip(pre_prev.row(b)) {
                if z <= 0.0 {
                    *acc = 0.0;
                }
            }
        }
        delta = d_in;
    }
    Ok(grad)
}
