//! Minimal dense network: forward/backward passes, CE and WSM losses, SGD.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod matrix;
pub mod model;
pub mod optim;

pub use loss::{backward, logit_grad, loss, loss_and_grad, loss_ce, loss_wsm, ClassWeights, LossKind};
pub use matrix::{LabeledBatch, Matrix};
pub use model::{backprop, forward, mlp_shapes, predict_logits, Activation, ForwardCache, LayerShape, ModelParams};
pub use optim::sgd_step;
