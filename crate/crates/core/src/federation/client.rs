use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{FederationConfig, LocalWork, LossChoice, StrategyConfig};
use crate::error::{Error, Result};
use crate::nn::{loss_and_grad, sgd_step, LossKind, ModelParams};
use crate::partition::DatasetShard;

/// A client's data plus whatever state it carries between rounds.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub shard: DatasetShard,
    /// SCAFFOLD control variate `c_i`; `None` for other strategies.
    pub control: Option<ModelParams>,
}

impl ClientState {
    pub fn new(shard: DatasetShard) -> Self {
        Self { shard, control: None }
    }

    pub fn id(&self) -> usize {
        self.shard.client_id
    }

    pub fn loss_kind(&self, choice: LossChoice) -> LossKind {
        match choice {
            LossChoice::Ce => LossKind::CrossEntropy,
            LossChoice::Wsm => LossKind::Wsm(self.shard.beta.clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalUpdate {
    pub client_id: usize,
    pub params: ModelParams,
    /// Number of SGD steps taken, `tau_i`.
    pub steps: usize,
    /// Training samples held by the client, `n_i`.
    pub n_samples: usize,
    /// `c_i+ - c_i` under SCAFFOLD.
    pub control_delta: Option<ModelParams>,
    /// Mean loss over the local steps.
    pub mean_loss: f64,
}

/// Mini-batch index lists for one round of local work.
pub fn batch_schedule<R: Rng + ?Sized>(n: usize, batch_size: usize, work: LocalWork, rng: &mut R) -> Vec<Vec<usize>> {
    let mut batches = Vec::new();
    let mut epoch = |batches: &mut Vec<Vec<usize>>, limit: usize| {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        for chunk in order.chunks(batch_size).take(limit) {
            batches.push(chunk.to_vec());
        }
    };
    match work {
        LocalWork::Epochs(e) => {
            for _ in 0..e {
                epoch(&mut batches, usize::MAX);
            }
        }
        LocalWork::Iterations(t) => {
            while batches.len() < t {
                let left = t - batches.len();
                epoch(&mut batches, left);
            }
        }
    }
    batches
}

/// Runs local SGD from `global` on the client's training split.
///
/// The step direction is the loss gradient, plus `mu (w - w_global)` under
/// FedProx and `c - c_i` under SCAFFOLD; weight decay is applied by the
/// optimiser. Under SCAFFOLD the client control is updated in place with
/// `c_i+ = c_i - c + (w_global - w) / (tau * lr)`.
pub fn local_train<R: Rng + ?Sized>(
    global: &ModelParams,
    client: &mut ClientState,
    cfg: &FederationConfig,
    server_control: Option<&ModelParams>,
    rng: &mut R,
) -> Result<LocalUpdate> {
    let train = &client.shard.train;
    if train.is_empty() {
        return Err(Error::config(format!("client {} has no training data", client.id())));
    }
    let kind = client.loss_kind(cfg.loss);
    let scaffold = matches!(cfg.strategy, StrategyConfig::Scaffold);
    let correction = if scaffold {
        let c = server_control.ok_or_else(|| Error::Invariant("SCAFFOLD needs a server control variate".into()))?;
        let ci = client.control.get_or_insert_with(|| global.zeros_like());
        let mut d = c.clone();
        for (a, b) in d.as_mut_slice().iter_mut().zip(ci.as_slice()) {
            *a -= b;
        }
        Some(d)
    } else {
        None
    };

    let schedule = batch_schedule(train.len(), cfg.batch_size, cfg.local_work, rng);
    let mut w = global.clone();
    let mut loss_sum = 0.0;
    for idx in &schedule {
        let batch = train.select(idx);
        let (l, mut g) = loss_and_grad(&w, &batch, &kind)?;
        loss_sum += l;
        if let StrategyConfig::FedProx { mu } = cfg.strategy {
            if mu != 0.0 {
                for ((gv, wv), gl) in g.as_mut_slice().iter_mut().zip(w.as_slice()).zip(global.as_slice()) {
                    *gv += mu * (wv - gl);
                }
            }
        }
        if let Some(corr) = &correction {
            for (gv, cv) in g.as_mut_slice().iter_mut().zip(corr.as_slice()) {
                *gv += cv;
            }
        }
        sgd_step(&mut w, &g, cfg.lr, cfg.weight_decay)?;
    }
    if !w.is_finite() {
        return Err(Error::Invariant(format!(
            "client {} diverged to non-finite parameters; lower the learning rate",
            client.id()
        )));
    }

    let steps = schedule.len();
    let control_delta = match (&correction, server_control) {
        (Some(_), Some(c)) => {
            let ci = client.control.as_mut().expect("control initialised above");
            let scale = 1.0 / (steps as f64 * cfg.lr);
            let mut delta = ci.zeros_like();
            for (((d, &cv), &gv), &wv) in delta
                .as_mut_slice()
                .iter_mut()
                .zip(c.as_slice())
                .zip(global.as_slice())
                .zip(w.as_slice())
            {
                // c_i+ - c_i = -c + (w_g - w) / (tau lr)
                *d = -cv + (gv - wv) * scale;
            }
            for (a, d) in ci.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                *a += d;
            }
            Some(delta)
        }
        _ => None,
    };

    Ok(LocalUpdate {
        client_id: client.id(),
        params: w,
        steps,
        n_samples: train.len(),
        control_delta,
        mean_loss: loss_sum / steps as f64,
    })
}
