use super::model::ModelParams;
use crate::error::{Error, Result};

/// Plain SGD with weight decay folded into the gradient:
/// `w <- w - lr * (grad + weight_decay * w)`, applied to weights and biases alike.
///
/// `lr = 0` leaves the parameters untouched; negative or non-finite rates are rejected.
pub fn sgd_step(params: &mut ModelParams, grad: &ModelParams, lr: f64, weight_decay: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::config(format!("learning rate must be a finite non-negative number, got {lr}")));
    }
    if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
        return Err(Error::config(format!("weight decay must be finite and >= 0, got {weight_decay}")));
    }
    if !params.same_layout(grad) {
        return Err(Error::config("gradient layout does not match parameters"));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (w, g) in params.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *w -= lr * (g + weight_decay * *w);
    }
    Ok(())
}
