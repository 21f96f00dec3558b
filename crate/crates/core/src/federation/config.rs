use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "lowercase")]
pub enum StrategyConfig {
    FedAvg,
    FedProx { mu: f64 },
    Scaffold,
    FedNova,
}

impl StrategyConfig {
    pub fn name(&self) -> &'static str {
        match self {
            StrategyConfig::FedAvg => "fedavg",
            StrategyConfig::FedProx { .. } => "fedprox",
            StrategyConfig::Scaffold => "scaffold",
            StrategyConfig::FedNova => "fednova",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossChoice {
    Ce,
    Wsm,
}

impl LossChoice {
    pub fn name(&self) -> &'static str {
        match self {
            LossChoice::Ce => "ce",
            LossChoice::Wsm => "wsm",
        }
    }
}

/// How much local training a selected client does per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalWork {
    /// Full passes over the shuffled training split; the last batch of an epoch may be short.
    Epochs(usize),
    /// Exactly this many SGD steps, reshuffling whenever the split is exhausted.
    Iterations(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Keep full forgetting and accuracy matrices every `metric_stride` rounds (and on the last round).
    pub metric_stride: usize,
    /// Evaluate `F_ki` every round. Costs one pass over every client's validation
    /// split per participating model.
    pub track_forgetting: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric_stride: 100,
            track_forgetting: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub client_fraction: f64,
    pub rounds: usize,
    pub local_work: LocalWork,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossChoice,
    pub strategy: StrategyConfig,
    /// Hidden layer widths; empty for multinomial logistic regression.
    pub hidden: Vec<usize>,
    pub seed: u64,
    pub eval: EvalConfig,
}

impl FederationConfig {
    /// Number of clients selected per round, `ceil(p * K)`.
    ///
    /// A `1e-9` slack absorbs products such as `0.07 * 100 = 7.000000000000001`.
    pub fn clients_per_round(&self) -> usize {
        ((self.client_fraction * self.num_clients as f64 - 1e-9).ceil() as usize).clamp(1, self.num_clients)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::config("num_clients must be >= 1"));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(Error::config(format!(
                "client_fraction must lie in (0, 1], got {}",
                self.client_fraction
            )));
        }
        match self.local_work {
            LocalWork::Epochs(0) => return Err(Error::config("local_epochs must be >= 1")),
            LocalWork::Iterations(0) => return Err(Error::config("local_iterations must be >= 1")),
            _ => {}
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if let StrategyConfig::FedProx { mu } = self.strategy {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::config(format!("fedprox mu must be >= 0, got {mu}")));
            }
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if self.eval.metric_stride == 0 {
            return Err(Error::config("metric_stride must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) fn test_config(num_clients: usize) -> FederationConfig {
    FederationConfig {
        num_clients,
        client_fraction: 1.0,
        rounds: 3,
        local_work: LocalWork::Epochs(1),
        batch_size: 8,
        lr: 0.1,
        weight_decay: 1e-4,
        loss: LossChoice::Ce,
        strategy: StrategyConfig::FedAvg,
        hidden: vec![],
        seed: 0,
        eval: EvalConfig::default(),
    }
}
