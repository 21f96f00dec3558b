//! Round-based federated training with FedAvg, FedProx, SCAFFOLD and FedNova.
//!
//! Each round selects `ceil(p K)` clients, trains them locally from the current
//! global model on independent RNG streams, measures forgetting of every local
//! model against the previous global model, and aggregates.

mod aggregate;
mod client;
mod config;
mod runner;

pub use aggregate::{aggregate, ServerState};
pub use client::{batch_schedule, local_train, ClientState, LocalUpdate};
pub use config::{EvalConfig, FederationConfig, LocalWork, LossChoice, StrategyConfig};
pub use runner::{run_federation, select_clients, Federation, FederationOutcome, RoundHooks};
