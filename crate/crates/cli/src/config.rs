//! Experiment configuration files.
//!
//! TOML with one table per section (or equivalent dotted keys). Unknown keys
//! are rejected. Scientific parameters (learning rate, Dirichlet alpha, client
//! fraction, ...) have no defaults; only bookkeeping keys do.

use std::path::{Path, PathBuf};

use fedwsm::federation::{EvalConfig, FederationConfig, LocalWork, LossChoice, StrategyConfig};
use fedwsm::partition::PartitionConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_METRIC_STRIDE: usize = 100;
pub const DEFAULT_TRAILING_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base seed; repeat `r` uses `seed + r` for partitioning and training.
    pub seed: u64,
    #[serde(default = "one")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_stride")]
    pub metric_stride: usize,
    /// Rounds averaged for the summary accuracy; defaults to `min(100, rounds)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trailing_window: Option<usize>,
    /// Write a checkpoint every this many rounds (0: final model only).
    #[serde(default)]
    pub checkpoint_every: usize,
    pub dataset: DatasetSpec,
    pub partition: PartitionSection,
    pub federation: FederationSection,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

fn one() -> usize {
    1
}

fn default_stride() -> usize {
    DEFAULT_METRIC_STRIDE
}

fn default_val_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        num_classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        #[serde(default)]
        seed: u64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_labels: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_fraction: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        label_column: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_path: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_fraction: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub alpha: f64,
    pub num_clients: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    FedAvg,
    FedProx,
    Scaffold,
    FedNova,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub client_fraction: f64,
    pub rounds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_iterations: Option<usize>,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub loss: LossChoice,
    pub strategy: StrategyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prox_mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Hidden layer widths; `[]` is multinomial logistic regression.
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Lr,
    Alpha,
    ClientFraction,
    LocalIterations,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Lr => "lr",
            SweepAxis::Alpha => "alpha",
            SweepAxis::ClientFraction => "client_fraction",
            SweepAxis::LocalIterations => "local_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl FederationSection {
    pub fn strategy_config(&self) -> CliResult<StrategyConfig> {
        match (self.strategy, self.prox_mu) {
            (StrategyName::FedProx, Some(mu)) => Ok(StrategyConfig::FedProx { mu }),
            (StrategyName::FedProx, None) => Err(CliError::config("federation.prox_mu is required for fedprox")),
            (_, Some(_)) => Err(CliError::config("federation.prox_mu is only valid with strategy = \"fedprox\"")),
            (StrategyName::FedAvg, None) => Ok(StrategyConfig::FedAvg),
            (StrategyName::Scaffold, None) => Ok(StrategyConfig::Scaffold),
            (StrategyName::FedNova, None) => Ok(StrategyConfig::FedNova),
        }
    }

    pub fn local_work(&self) -> CliResult<LocalWork> {
        match (self.local_epochs, self.local_iterations) {
            (Some(e), None) => Ok(LocalWork::Epochs(e)),
            (None, Some(t)) => Ok(LocalWork::Iterations(t)),
            _ => Err(CliError::config(
                "exactly one of federation.local_epochs and federation.local_iterations must be set",
            )),
        }
    }

    pub fn set_strategy(&mut self, strategy: StrategyConfig) {
        (self.strategy, self.prox_mu) = match strategy {
            StrategyConfig::FedAvg => (StrategyName::FedAvg, None),
            StrategyConfig::FedProx { mu } => (StrategyName::FedProx, Some(mu)),
            StrategyConfig::Scaffold => (StrategyName::Scaffold, None),
            StrategyConfig::FedNova => (StrategyName::FedNova, None),
        };
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes relative file paths absolute with respect to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.dataset {
            DatasetSpec::Synthetic { .. } => {}
            DatasetSpec::Idx {
                images,
                labels,
                test_images,
                test_labels,
                ..
            } => {
                fix(images);
                fix(labels);
                test_images.iter_mut().for_each(fix);
                test_labels.iter_mut().for_each(fix);
            }
            DatasetSpec::Csv { path, test_path, .. } => {
                fix(path);
                test_path.iter_mut().for_each(fix);
            }
        }
        if let Some(out) = &mut self.output_dir {
            fix(out);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn trailing_window(&self) -> usize {
        self.trailing_window
            .unwrap_or(DEFAULT_TRAILING_WINDOW.min(self.federation.rounds))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.repeats as u64).map(|r| self.seed + r).collect()
    }

    pub fn partition_config(&self, seed: u64) -> PartitionConfig {
        PartitionConfig {
            alpha: self.partition.alpha,
            num_clients: self.partition.num_clients,
            seed,
            val_fraction: self.partition.val_fraction,
        }
    }

    pub fn federation_config(&self, seed: u64) -> CliResult<FederationConfig> {
        let f = &self.federation;
        Ok(FederationConfig {
            num_clients: self.partition.num_clients,
            client_fraction: f.client_fraction,
            rounds: f.rounds,
            local_work: f.local_work()?,
            batch_size: f.batch_size,
            lr: f.lr,
            weight_decay: f.weight_decay,
            loss: f.loss,
            strategy: f.strategy_config()?,
            hidden: self.model.hidden.clone(),
            seed,
            eval: EvalConfig {
                metric_stride: self.metric_stride,
                track_forgetting: true,
            },
        })
    }

    /// Checks every nested invariant; errors name the offending key.
    pub fn validate(&self) -> CliResult<()> {
        if self.repeats == 0 {
            return Err(CliError::config("repeats must be >= 1"));
        }
        if self.federation.rounds == 0 {
            return Err(CliError::config("federation.rounds must be >= 1"));
        }
        if let Some(w) = self.trailing_window {
            if w == 0 || w > self.federation.rounds {
                return Err(CliError::config(format!(
                    "trailing_window must lie in [1, federation.rounds = {}], got {w}",
                    self.federation.rounds
                )));
            }
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                num_classes,
                dim,
                per_class,
                spread,
                ..
            } => {
                if *num_classes < 2 {
                    return Err(CliError::config("dataset.num_classes must be >= 2"));
                }
                if *dim < 2 {
                    return Err(CliError::config("dataset.dim must be >= 2"));
                }
                if *per_class == 0 {
                    return Err(CliError::config("dataset.per_class must be >= 1"));
                }
                if !(*spread >= 0.0 && spread.is_finite()) {
                    return Err(CliError::config(format!("dataset.spread must be >= 0, got {spread}")));
                }
            }
            DatasetSpec::Idx {
                test_images,
                test_labels,
                test_fraction,
                ..
            } => {
                if test_images.is_some() != test_labels.is_some() {
                    return Err(CliError::config(
                        "dataset.test_images and dataset.test_labels must be given together",
                    ));
                }
                check_test_fraction(*test_fraction)?;
            }
            DatasetSpec::Csv { test_fraction, .. } => check_test_fraction(*test_fraction)?,
        }
        self.partition_config(self.seed).validate().map_err(CliError::from)?;
        let fed = self.federation_config(self.seed)?;
        fed.validate()
            .map_err(|e| CliError::config(format!("federation: {}", strip_config_prefix(e))))?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(CliError::config("sweep.values must not be empty"));
            }
            for &v in &sweep.values {
                let mut point = self.clone();
                point.sweep = None;
                point.apply_axis(sweep.axis, v)?;
                point
                    .validate()
                    .map_err(|e| CliError::config(format!("sweep.values entry {v}: {}", e.message())))?;
            }
        }
        Ok(())
    }

    /// Sets one swept parameter. `local_iterations` replaces `local_epochs`.
    pub fn apply_axis(&mut self, axis: SweepAxis, value: f64) -> CliResult<()> {
        match axis {
            SweepAxis::Lr => self.federation.lr = value,
            SweepAxis::Alpha => self.partition.alpha = value,
            SweepAxis::ClientFraction => self.federation.client_fraction = value,
            SweepAxis::LocalIterations => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(CliError::config(format!(
                        "sweep.values for local_iterations must be positive integers, got {value}"
                    )));
                }
                self.federation.local_epochs = None;
                self.federation.local_iterations = Some(value as usize);
            }
        }
        Ok(())
    }
}

fn check_test_fraction(f: Option<f64>) -> CliResult<()> {
    match f {
        Some(v) if !(0.0..1.0).contains(&v) => Err(CliError::config(format!(
            "dataset.test_fraction must lie in [0, 1), got {v}"
        ))),
        _ => Ok(()),
    }
}

fn strip_config_prefix(e: fedwsm::Error) -> String {
    match e {
        fedwsm::Error::Config(m) => m,
        other => other.to_string(),
    }
}
