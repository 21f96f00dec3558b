use rand::seq::index;

use super::aggregate::{aggregate, ServerState};
use super::client::{local_train, ClientState, LocalUpdate};
use super::config::FederationConfig;
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, accuracy_vector, average_forgetting, client_accuracy_grid, forgetting_from_accuracies, mean_defined,
    RoundReport,
};
use crate::nn::{mlp_shapes, LabeledBatch, ModelParams};
use crate::partition::{dirichlet_partition, partition_hash, Dataset, DatasetShard, PartitionConfig};
use crate::rng::{Purpose, Streams};

/// Picks `m` distinct clients out of `num_clients` for `round`, sorted ascending.
pub fn select_clients(num_clients: usize, m: usize, streams: &Streams, round: usize) -> Vec<usize> {
    let mut rng = streams.get(Purpose::ClientSelection, round as u64, 0);
    let mut ids = index::sample(&mut rng, num_clients, m.min(num_clients)).into_vec();
    ids.sort_unstable();
    ids
}

/// Observation points inside a round.
///
/// `before_aggregation` sees the global model from the end of the previous
/// round and every participant's locally trained model; `after_aggregation`
/// sees the new global model and the finished report.
pub trait RoundHooks {
    fn before_aggregation(
        &mut self,
        _round: usize,
        _prev_global: &ModelParams,
        _client_models: &[(usize, &ModelParams)],
    ) -> Result<()> {
        Ok(())
    }

    fn after_aggregation(&mut self, _round: usize, _global: &ModelParams, _report: &RoundReport) -> Result<()> {
        Ok(())
    }
}

impl RoundHooks for () {}

pub struct Federation {
    cfg: FederationConfig,
    streams: Streams,
    clients: Vec<ClientState>,
    shards_view: Vec<DatasetShard>,
    server: ServerState,
    pooled_val: LabeledBatch,
    test: LabeledBatch,
    prev_client_acc: Vec<Option<f64>>,
}

impl Federation {
    /// Builds a federation with a Glorot-initialised model drawn from the seed.
    pub fn new(shards: Vec<DatasetShard>, test: LabeledBatch, num_classes: usize, cfg: FederationConfig) -> Result<Self> {
        let dim = shards
            .first()
            .map(|s| s.train.dim())
            .ok_or_else(|| Error::config("federation needs at least one client"))?;
        let streams = Streams::new(cfg.seed);
        let mut rng = streams.get(Purpose::ModelInit, 0, 0);
        let init = ModelParams::init_glorot(mlp_shapes(dim, &cfg.hidden, num_classes), &mut rng)?;
        Self::with_initial(shards, test, cfg, init)
    }

    pub fn with_initial(
        shards: Vec<DatasetShard>,
        test: LabeledBatch,
        cfg: FederationConfig,
        init: ModelParams,
    ) -> Result<Self> {
        cfg.validate()?;
        if shards.len() != cfg.num_clients {
            return Err(Error::config(format!(
                "num_clients is {} but {} shards were supplied",
                cfg.num_clients,
                shards.len()
            )));
        }
        if let Some((i, s)) = shards.iter().enumerate().find(|(i, s)| s.client_id != *i) {
            return Err(Error::config(format!("shard at position {i} has client_id {}", s.client_id)));
        }
        if let Some(s) = shards.iter().find(|s| s.train.is_empty()) {
            return Err(Error::config(format!("client {} has an empty training split", s.client_id)));
        }
        if let Some(s) = shards.iter().find(|s| s.train.dim() != init.input_dim()) {
            return Err(Error::config(format!(
                "client {} has feature dimension {}, model expects {}",
                s.client_id,
                s.train.dim(),
                init.input_dim()
            )));
        }
        let dim = init.input_dim();
        let pooled_val = LabeledBatch::concat(dim, shards.iter().map(|s| &s.val));
        let prev_client_acc = accuracy_vector(&init, &shards)?;
        let server = ServerState::new(init, cfg.strategy);
        Ok(Self {
            streams: Streams::new(cfg.seed),
            clients: shards.iter().cloned().map(ClientState::new).collect(),
            shards_view: shards,
            server,
            pooled_val,
            test,
            prev_client_acc,
            cfg,
        })
    }

    pub fn config(&self) -> &FederationConfig {
        &self.cfg
    }

    pub fn global(&self) -> &ModelParams {
        &self.server.global
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn shards(&self) -> &[DatasetShard] {
        &self.shards_view
    }

    pub fn rounds_done(&self) -> usize {
        self.server.round
    }

    fn train_selected(&mut self, selected: &[usize], round: usize) -> Result<Vec<LocalUpdate>> {
        let global = &self.server.global;
        let control = self.server.control.as_ref();
        let cfg = &self.cfg;
        let streams = &self.streams;
        let mut picked: Vec<&mut ClientState> = self
            .clients
            .iter_mut()
            .filter(|c| selected.binary_search(&c.id()).is_ok())
            .collect();
        let train = |c: &mut &mut ClientState| {
            let mut rng = streams.get(Purpose::LocalTraining, round as u64, c.id() as u64);
            local_train(global, c, cfg, control, &mut rng)
        };
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            picked.par_iter_mut().map(train).collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            picked.iter_mut().map(train).collect()
        }
    }

    /// Runs one round and returns its report.
    pub fn step(&mut self, hooks: &mut dyn RoundHooks) -> Result<RoundReport> {
        let round = self.server.round + 1;
        let k = self.cfg.num_clients;
        let selected = select_clients(k, self.cfg.clients_per_round(), &self.streams, round);
        let updates = self.train_selected(&selected, round)?;

        let models: Vec<(usize, &ModelParams)> = updates.iter().map(|u| (u.client_id, &u.params)).collect();
        hooks.before_aggregation(round, &self.server.global, &models)?;
        let keep = round.is_multiple_of(self.cfg.eval.metric_stride) || round == self.cfg.rounds;
        let (forgetting, grid, avg_forgetting) = if self.cfg.eval.track_forgetting {
            let grid = client_accuracy_grid(round, &models, &self.shards_view)?;
            let f = forgetting_from_accuracies(&self.prev_client_acc, &grid)?;
            let avg = if k >= 2 { average_forgetting(&f)? } else { vec![None; k] };
            (Some(f), Some(grid), avg)
        } else {
            (None, None, vec![None; k])
        };
        drop(models);

        aggregate(&mut self.server, self.cfg.strategy, k, updates)?;
        let global = &self.server.global;
        let client_acc = accuracy_vector(global, &self.shards_view)?;
        let global_val_acc = if self.pooled_val.is_empty() { None } else { Some(accuracy(global, &self.pooled_val)?) };
        let global_test_acc = if self.test.is_empty() { None } else { Some(accuracy(global, &self.test)?) };
        let report = RoundReport {
            round,
            participants: selected,
            global_val_acc,
            global_test_acc,
            client_acc: client_acc.clone(),
            mean_forgetting: mean_defined(&avg_forgetting),
            avg_forgetting,
            forgetting: forgetting.filter(|_| keep),
            client_model_acc: grid.filter(|_| keep),
            control_norm: self.server.control.as_ref().map(ModelParams::l2_norm),
        };
        self.prev_client_acc = client_acc;
        hooks.after_aggregation(round, &self.server.global, &report)?;
        Ok(report)
    }

    /// Runs the remaining configured rounds.
    pub fn run(&mut self, hooks: &mut dyn RoundHooks) -> Result<Vec<RoundReport>> {
        let mut reports = Vec::with_capacity(self.cfg.rounds.saturating_sub(self.server.round));
        while self.server.round < self.cfg.rounds {
            reports.push(self.step(hooks)?);
        }
        Ok(reports)
    }
}

#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub reports: Vec<RoundReport>,
    pub global: ModelParams,
    pub partition_hash: String,
}

/// Partitions `dataset`, then trains for `fed_cfg.rounds` rounds.
pub fn run_federation(
    dataset: &Dataset,
    partition_cfg: &PartitionConfig,
    fed_cfg: &FederationConfig,
    hooks: &mut dyn RoundHooks,
) -> Result<FederationOutcome> {
    let shards = dirichlet_partition(dataset, partition_cfg)?;
    let hash = partition_hash(&shards);
    let mut fed = Federation::new(shards, dataset.test().clone(), dataset.num_classes(), fed_cfg.clone())?;
    let reports = fed.run(hooks)?;
    Ok(FederationOutcome {
        reports,
        global: fed.server.global,
        partition_hash: hash,
    })
}
