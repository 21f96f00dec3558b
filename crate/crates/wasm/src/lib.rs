//! WebAssembly bindings for the browser demo in `web/`.
//!
//! Every export takes plain numbers or strings and returns a JSON string, so
//! the page needs no generated type glue beyond `wasm-bindgen` itself.

use fedwsm::federation::{EvalConfig, Federation, FederationConfig, LocalWork, LossChoice, StrategyConfig};
use fedwsm::nn::{logit_grad, loss, ClassWeights, LossKind, Matrix};
use fedwsm::partition::{dirichlet_partition, make_synthetic, mean_label_entropy, Dataset, PartitionConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Debug, Serialize)]
pub struct LossView {
    pub ce: f64,
    pub wsm: f64,
    pub softmax: Vec<f64>,
    pub weighted_softmax: Vec<f64>,
    pub grad_ce: Vec<f64>,
    pub grad_wsm: Vec<f64>,
}

/// Both losses and their logit gradients for one sample.
pub fn explore_loss(logits: &[f64], beta: &[f64], label: usize) -> fedwsm::Result<LossView> {
    let z = Matrix::new(1, logits.len(), logits.to_vec())?;
    let total: f64 = beta.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(fedwsm::Error::Config("class weights must have a positive sum".into()));
    }
    let weights = ClassWeights::new(beta.iter().map(|b| b / total).collect())?;
    let wsm = LossKind::Wsm(weights.clone());
    let labels = [label];
    let ce = loss(&z, &labels, &LossKind::CrossEntropy)?;
    let wsm_loss = loss(&z, &labels, &wsm)?;
    let grad_ce = logit_grad(&z, &labels, &LossKind::CrossEntropy)?.into_data();
    let grad_wsm = logit_grad(&z, &labels, &wsm)?.into_data();
    let onehot = |c: usize| if c == label { 1.0 } else { 0.0 };
    Ok(LossView {
        ce,
        wsm: wsm_loss,
        softmax: grad_ce.iter().enumerate().map(|(c, g)| g + onehot(c)).collect(),
        weighted_softmax: grad_wsm
            .iter()
            .enumerate()
            .map(|(c, g)| if weights.as_slice()[c] > 0.0 { g + onehot(c) } else { 0.0 })
            .collect(),
        grad_ce,
        grad_wsm,
    })
}

/// CE and WSM loss, softmax and gradient for one sample, as JSON.
#[wasm_bindgen(js_name = exploreLoss)]
pub fn explore_loss_js(logits: &[f64], beta: &[f64], label: usize) -> Result<String, JsError> {
    explore_loss(logits, beta, label).map(|v| to_json(&v)).map_err(js_err)
}

#[derive(Debug, Serialize)]
pub struct PartitionView {
    pub num_classes: usize,
    /// `counts[k][c]`: training plus validation samples of class `c` on client `k`.
    pub counts: Vec<Vec<usize>>,
    pub mean_label_entropy: f64,
}

fn demo_dataset(num_classes: usize, seed: u64) -> fedwsm::Result<Dataset> {
    make_synthetic(num_classes, 8, 100, 0.8, seed)
}

/// Client-by-class sample counts of a Dirichlet partition of a small synthetic dataset.
pub fn preview_partition(alpha: f64, num_clients: usize, num_classes: usize, seed: u64) -> fedwsm::Result<PartitionView> {
    let ds = demo_dataset(num_classes, seed)?;
    let shards = dirichlet_partition(&ds, &PartitionConfig::new(alpha, num_clients, seed))?;
    Ok(PartitionView {
        num_classes,
        counts: shards.iter().map(|s| s.class_counts(num_classes)).collect(),
        mean_label_entropy: mean_label_entropy(&shards, num_classes),
    })
}

#[wasm_bindgen(js_name = previewPartition)]
pub fn preview_partition_js(alpha: f64, num_clients: usize, num_classes: usize, seed: u32) -> Result<String, JsError> {
    preview_partition(alpha, num_clients, num_classes, seed.into())
        .map(|v| to_json(&v))
        .map_err(js_err)
}

#[derive(Debug, Serialize)]
pub struct StepView {
    pub round: usize,
    pub participants: Vec<usize>,
    pub test_accuracy: Option<f64>,
    pub mean_forgetting: Option<f64>,
    /// `forgetting[k][i]`: data of client `k`, model of client `i`; `null` where model `i` did not train.
    pub forgetting: Vec<Vec<Option<f64>>>,
}

/// A small federation advanced one round at a time.
#[wasm_bindgen]
pub struct Simulation {
    fed: Federation,
}

impl Simulation {
    pub fn create(
        alpha: f64,
        num_clients: usize,
        client_fraction: f64,
        loss: LossChoice,
        strategy: StrategyConfig,
        seed: u64,
    ) -> fedwsm::Result<Self> {
        let num_classes = 10;
        let ds = demo_dataset(num_classes, seed)?;
        let shards = dirichlet_partition(&ds, &PartitionConfig::new(alpha, num_clients, seed))?;
        let cfg = FederationConfig {
            num_clients,
            client_fraction,
            rounds: usize::MAX,
            local_work: LocalWork::Iterations(20),
            batch_size: 16,
            lr: 0.1,
            weight_decay: 0.0,
            loss,
            strategy,
            hidden: vec![16],
            seed,
            eval: EvalConfig {
                metric_stride: 1,
                track_forgetting: true,
            },
        };
        Ok(Self {
            fed: Federation::new(shards, ds.test().clone(), num_classes, cfg)?,
        })
    }

    pub fn advance(&mut self) -> fedwsm::Result<StepView> {
        let r = self.fed.step(&mut ())?;
        let forgetting = r
            .forgetting
            .as_ref()
            .map(|m| (0..m.size()).map(|k| m.row(k).to_vec()).collect())
            .unwrap_or_default();
        Ok(StepView {
            round: r.round,
            participants: r.participants,
            test_accuracy: r.global_test_acc,
            mean_forgetting: r.mean_forgetting,
            forgetting,
        })
    }
}

#[wasm_bindgen]
impl Simulation {
    /// `loss` is `"ce"` or `"wsm"`; `strategy` is `"fedavg"`, `"fedprox"`, `"scaffold"` or `"fednova"`.
    #[wasm_bindgen(constructor)]
    pub fn new(
        alpha: f64,
        num_clients: usize,
        client_fraction: f64,
        loss: &str,
        strategy: &str,
        seed: u32,
    ) -> Result<Simulation, JsError> {
        let loss = match loss {
            "ce" => LossChoice::Ce,
            "wsm" => LossChoice::Wsm,
            other => return Err(JsError::new(&format!("unknown loss `{other}`"))),
        };
        let strategy = match strategy {
            "fedavg" => StrategyConfig::FedAvg,
            "fedprox" => StrategyConfig::FedProx { mu: 0.01 },
            "scaffold" => StrategyConfig::Scaffold,
            "fednova" => StrategyConfig::FedNova,
            other => return Err(JsError::new(&format!("unknown strategy `{other}`"))),
        };
        Self::create(alpha, num_clients, client_fraction, loss, strategy, seed.into()).map_err(js_err)
    }

    /// Runs one round and returns its report as JSON.
    pub fn step(&mut self) -> Result<String, JsError> {
        self.advance().map(|v| to_json(&v)).map_err(js_err)
    }

    pub fn round(&self) -> usize {
        self.fed.rounds_done()
    }
}
