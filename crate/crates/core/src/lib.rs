//! Deterministic federated-learning simulator.
//!
//! The crate is organised around four pieces:
//!
//! - [`nn`]: a small dense network with analytic gradients for the standard
//!   softmax cross-entropy and the re-weighted softmax (WSM) loss, where each
//!   class term of the softmax denominator is scaled by the client's class
//!   proportion `beta_c`.
//! - [`partition`]: synthetic and file-backed datasets plus Dirichlet
//!   non-i.i.d. partitioning into equally sized client shards.
//! - [`federation`]: client selection, local training and server aggregation
//!   for FedAvg, FedProx, SCAFFOLD and FedNova.
//! - [`metrics`]: accuracy, local client forgetting `F_ki`, its per-client
//!   average `F_k`, trailing-window accuracy and heatmap export.
//!
//! Every random draw comes from a [`rng::Streams`] keyed by
//! `(seed, purpose, round, client)`, so results do not depend on the order in
//! which clients are trained or on the degree of parallelism.

pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod partition;
pub mod rng;

pub use error::{Error, Result};
