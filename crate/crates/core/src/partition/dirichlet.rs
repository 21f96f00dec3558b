//! Equal-size non-i.i.d. client shards from Dirichlet class proportions.
//!
//! Every client receives exactly `m = floor(N / K)` samples; the `N mod K`
//! leftovers are never assigned. Clients are filled in id order from shared
//! per-class pools (shuffled once, consumed from the front):
//!
//! 1. draw `q ~ Dir(alpha * 1_C)` from the client's own stream;
//! 2. request `round(q_c * m)` samples of each class, capped by what the pool
//!    still holds; if rounding overshoots `m`, trim the largest requests;
//! 3. while the client is short, spread the shortfall over the non-empty pools
//!    in proportion to `q` (or to pool size when `q` has no mass left on them);
//!    once proportional shares round to zero, single samples come from the
//!    largest remaining pool.
//!
//! The shard is then shuffled and its first `round(val_fraction * m)` samples
//! form the validation split.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::{ClassWeights, LabeledBatch};
use crate::rng::{Purpose, Streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub alpha: f64,
    pub num_clients: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl PartitionConfig {
    pub fn new(alpha: f64, num_clients: usize, seed: u64) -> Self {
        Self {
            alpha,
            num_clients,
            seed,
            val_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("partition.alpha must be > 0, got {}", self.alpha)));
        }
        if self.num_clients == 0 {
            return Err(Error::config("partition.num_clients must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::config(format!(
                "partition.val_fraction must lie in [0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// One client's data.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetShard {
    pub client_id: usize,
    pub train: LabeledBatch,
    pub val: LabeledBatch,
    /// Class proportions of `train`.
    pub beta: ClassWeights,
    /// Rows of the source dataset, training split first, then validation.
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

impl DatasetShard {
    /// Number of training samples, the aggregation weight `n_k`.
    pub fn n_k(&self) -> usize {
        self.train.len()
    }

    /// Per-class counts over train and validation together.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &y in self.train.labels().iter().chain(self.val.labels()) {
            counts[y] += 1;
        }
        counts
    }
}

/// Samples `Dir(alpha * 1_dim)`.
///
/// Gamma variates are combined in log space. For `alpha < 1` the draw uses
/// `G_alpha = G_{alpha+1} * U^{1/alpha}`, which stays representable even when
/// `alpha` is so small that the direct Gamma sample underflows to zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    assert!(alpha > 0.0 && dim > 0);
    let logs: Vec<f64> = if alpha >= 1.0 {
        let g = Gamma::new(alpha, 1.0).expect("valid gamma");
        (0..dim).map(|_| g.sample(rng).ln()).collect()
    } else {
        let g = Gamma::new(alpha + 1.0, 1.0).expect("valid gamma");
        (0..dim)
            .map(|_| {
                let u: f64 = 1.0 - rng.random::<f64>();
                g.sample(rng).ln() + u.ln() / alpha
            })
            .collect()
    };
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn argmax_lowest(values: impl Iterator<Item = usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (i, v) in values.enumerate() {
        if v > 0 && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Per-class sample counts for one client of size `m`, given its proportions
/// and the current pool sizes.
pub(crate) fn allocate_counts(q: &[f64], pools: &[usize], m: usize) -> Vec<usize> {
    let c = q.len();
    let mut alloc: Vec<usize> = (0..c)
        .map(|i| ((q[i] * m as f64).round() as usize).min(pools[i]))
        .collect();
    let mut total: usize = alloc.iter().sum();
    while total > m {
        let i = argmax_lowest(alloc.iter().copied()).expect("total > 0");
        alloc[i] -= 1;
        total -= 1;
    }
    while total < m {
        let remaining = m - total;
        let capacity: Vec<usize> = (0..c).map(|i| pools[i] - alloc[i]).collect();
        let mut weights: Vec<f64> = (0..c).map(|i| if capacity[i] > 0 { q[i] } else { 0.0 }).collect();
        if weights.iter().sum::<f64>() <= 0.0 {
            weights = capacity.iter().map(|&v| v as f64).collect();
        }
        let wsum: f64 = weights.iter().sum();
        let mut progressed = 0;
        for i in 0..c {
            let extra = ((remaining as f64 * weights[i] / wsum).floor() as usize).min(capacity[i]);
            alloc[i] += extra;
            progressed += extra;
        }
        if progressed == 0 {
            let i = argmax_lowest(capacity.iter().copied()).expect("pools hold at least m samples");
            alloc[i] += 1;
            progressed = 1;
        }
        total += progressed;
    }
    alloc
}

/// Splits `dataset`'s training rows into `num_clients` equal shards.
pub fn dirichlet_partition(dataset: &Dataset, cfg: &PartitionConfig) -> Result<Vec<DatasetShard>> {
    cfg.validate()?;
    let n = dataset.len();
    let k = cfg.num_clients;
    if n == 0 {
        return Err(Error::config("cannot partition an empty dataset"));
    }
    if k > n {
        return Err(Error::config(format!("{k} clients but only {n} samples")));
    }
    let c = dataset.num_classes();
    let m = n / k;
    let streams = Streams::new(cfg.seed);

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &y) in dataset.labels().iter().enumerate() {
        pools[y].push(i);
    }
    let mut pool_rng = streams.get(Purpose::PartitionPools, 0, 0);
    for p in &mut pools {
        p.shuffle(&mut pool_rng);
    }
    let mut cursor = vec![0usize; c];

    let n_val = (cfg.val_fraction * m as f64).round() as usize;
    let mut shards = Vec::with_capacity(k);
    for client in 0..k {
        let mut rng = streams.get(Purpose::PartitionClient, 0, client as u64);
        let q = sample_dirichlet(cfg.alpha, c, &mut rng);
        let available: Vec<usize> = (0..c).map(|i| pools[i].len() - cursor[i]).collect();
        let counts = allocate_counts(&q, &available, m);
        let mut rows = Vec::with_capacity(m);
        for (cls, &cnt) in counts.iter().enumerate() {
            rows.extend_from_slice(&pools[cls][cursor[cls]..cursor[cls] + cnt]);
            cursor[cls] += cnt;
        }
        rows.shuffle(&mut rng);
        let (val_idx, train_idx) = rows.split_at(n_val);
        if train_idx.is_empty() {
            return Err(Error::config(format!(
                "client {client} has an empty training split ({m} samples, val_fraction {})",
                cfg.val_fraction
            )));
        }
        let train = dataset.train().select(train_idx);
        let val = dataset.train().select(val_idx);
        let beta = ClassWeights::from_labels(train.labels(), c)?;
        shards.push(DatasetShard {
            client_id: client,
            train,
            val,
            beta,
            train_indices: train_idx.to_vec(),
            val_indices: val_idx.to_vec(),
        });
    }
    Ok(shards)
}

/// SHA-256 over every shard's client id, row indices, labels and feature bits,
/// as lowercase hex.
pub fn partition_hash(shards: &[DatasetShard]) -> String {
    let mut h = Sha256::new();
    for s in shards {
        h.update((s.client_id as u64).to_le_bytes());
        for part in [(&s.train_indices, &s.train), (&s.val_indices, &s.val)] {
            h.update((part.0.len() as u64).to_le_bytes());
            for &i in part.0 {
                h.update((i as u64).to_le_bytes());
            }
            for &y in part.1.labels() {
                h.update((y as u64).to_le_bytes());
            }
            for v in part.1.features().data() {
                h.update(v.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean over clients of the Shannon entropy (nats) of each shard's class proportions.
pub fn mean_label_entropy(shards: &[DatasetShard], num_classes: usize) -> f64 {
    let total: f64 = shards
        .iter()
        .map(|s| {
            let counts = s.class_counts(num_classes);
            let n: usize = counts.iter().sum();
            counts
                .iter()
                .filter(|&&c| c > 0)
                .map(|&c| {
                    let p = c as f64 / n as f64;
                    -p * p.ln()
                })
                .sum::<f64>()
        })
        .sum();
    total / shards.len() as f64
}

/// Writes the per-client class manifest: `client_id,class,count`, one row per
/// (client, class) including zero counts.
pub fn write_manifest(shards: &[DatasetShard], num_classes: usize, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(b"client_id,class,count\n");
    for s in shards {
        for (cls, cnt) in s.class_counts(num_classes).into_iter().enumerate() {
            writeln!(out, "{},{},{}", s.client_id, cls, cnt).expect("write to vec");
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
