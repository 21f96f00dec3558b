//! Building datasets, running seeds, and writing every artifact of a command.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedwsm::federation::{Federation, LossChoice, RoundHooks, StrategyConfig};
use fedwsm::metrics::{export_heatmap, late_forgetting, trailing_accuracy, RoundLog, RoundReport};
use fedwsm::nn::{checkpoint, ModelParams};
use fedwsm::partition::{
    dirichlet_partition, load_csv, load_idx, make_synthetic, mean_label_entropy, partition_hash, write_manifest,
    Dataset,
};
use rayon::prelude::*;

use crate::config::{DatasetSpec, ExperimentConfig, SweepAxis};
use crate::error::{CliError, CliResult};

pub fn build_dataset(spec: &DatasetSpec) -> CliResult<Dataset> {
    let ds = match spec {
        DatasetSpec::Synthetic {
            num_classes,
            dim,
            per_class,
            spread,
            seed,
        } => make_synthetic(*num_classes, *dim, *per_class, *spread, *seed)?,
        DatasetSpec::Idx {
            images,
            labels,
            test_images,
            test_labels,
            test_fraction,
            seed,
        } => {
            let mut ds = load_idx(images, labels)?;
            if let (Some(ti), Some(tl)) = (test_images, test_labels) {
                let test = load_idx(ti, tl)?;
                ds = ds.with_test(test.train().clone())?;
            }
            if let Some(f) = test_fraction {
                ds = ds.split_test(*f, *seed)?;
            }
            ds
        }
        DatasetSpec::Csv {
            path,
            label_column,
            test_path,
            test_fraction,
            seed,
        } => {
            let mut ds = load_csv(path, label_column)?;
            if let Some(tp) = test_path {
                let test = load_csv(tp, label_column)?;
                ds = ds.with_test(test.train().clone())?;
            }
            if let Some(f) = test_fraction {
                ds = ds.split_test(*f, *seed)?;
            }
            ds
        }
    };
    if ds.test().is_empty() {
        return Err(CliError::config(
            "dataset has no test split; set dataset.test_fraction or provide test files",
        ));
    }
    Ok(ds)
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Outcome of one seed of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub partition_hash: String,
    pub trailing_accuracy: f64,
    pub late_forgetting: Option<f64>,
    pub final_test_accuracy: f64,
}

struct ArtifactHook {
    log: RoundLog,
    checkpoint_dir: PathBuf,
    every: usize,
}

impl RoundHooks for ArtifactHook {
    fn after_aggregation(&mut self, round: usize, global: &ModelParams, report: &RoundReport) -> fedwsm::Result<()> {
        self.log.write(report)?;
        if self.every > 0 && round.is_multiple_of(self.every) {
            checkpoint::save(global, &self.checkpoint_dir.join(format!("round_{round}.fwsm")))?;
        }
        Ok(())
    }
}

/// Trains one seed and writes `round_log.csv`, `partition.csv`, `heatmaps/` and
/// `checkpoints/` under `dir`.
pub fn run_seed(cfg: &ExperimentConfig, dataset: &Dataset, seed: u64, dir: &Path) -> CliResult<SeedResult> {
    let heat_dir = dir.join("heatmaps");
    let ckpt_dir = dir.join("checkpoints");
    create_dir(&heat_dir)?;
    create_dir(&ckpt_dir)?;

    let shards = dirichlet_partition(dataset, &cfg.partition_config(seed))?;
    let hash = partition_hash(&shards);
    write_manifest(&shards, dataset.num_classes(), &dir.join("partition.csv"))?;

    let fed_cfg = cfg.federation_config(seed)?;
    let mut fed = Federation::new(shards, dataset.test().clone(), dataset.num_classes(), fed_cfg)?;
    let mut hook = ArtifactHook {
        log: RoundLog::create(&dir.join("round_log.csv"))?,
        checkpoint_dir: ckpt_dir.clone(),
        every: cfg.checkpoint_every,
    };
    let reports = fed.run(&mut hook)?;
    checkpoint::save(fed.global(), &ckpt_dir.join("final.fwsm"))?;

    for r in &reports {
        if let Some(f) = &r.forgetting {
            export_heatmap(f, &heat_dir.join(format!("forgetting_round_{}", r.round)))?;
        }
        if let Some(a) = &r.client_model_acc {
            export_heatmap(a, &heat_dir.join(format!("accuracy_round_{}", r.round)))?;
        }
    }

    let last = reports.last().expect("rounds >= 1");
    Ok(SeedResult {
        seed,
        partition_hash: hash,
        trailing_accuracy: trailing_accuracy(&reports, cfg.trailing_window())?,
        late_forgetting: late_forgetting(&reports),
        final_test_accuracy: last.global_test_acc.expect("test split is non-empty"),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Mean of the defined late-forgetting values.
fn mean_forgetting(results: &[SeedResult]) -> Option<f64> {
    let v: Vec<f64> = results.iter().filter_map(|r| r.late_forgetting).collect();
    (!v.is_empty()).then(|| mean_std(&v).0)
}

pub fn write_summary(dir: &Path, cfg: &ExperimentConfig, results: &[SeedResult]) -> CliResult<()> {
    let mut csv = String::from("seed,partition_hash,trailing_accuracy,late_forgetting,final_test_accuracy\n");
    for r in results {
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.seed,
            r.partition_hash,
            r.trailing_accuracy,
            fmt_opt(r.late_forgetting),
            r.final_test_accuracy
        )
        .unwrap();
    }
    write_file(&dir.join("summary.csv"), &csv)?;

    let accs: Vec<f64> = results.iter().map(|r| r.trailing_accuracy).collect();
    let (m, s) = mean_std(&accs);
    let mut txt = String::new();
    let seeds: Vec<String> = results.iter().map(|r| r.seed.to_string()).collect();
    writeln!(txt, "runs: {} (seeds {})", results.len(), seeds.join(", ")).unwrap();
    writeln!(
        txt,
        "strategy: {}  loss: {}",
        cfg.federation.strategy_config()?.name(),
        cfg.federation.loss.name()
    )
    .unwrap();
    writeln!(
        txt,
        "trailing accuracy (last {} rounds): {m:.4} ± {s:.4}",
        cfg.trailing_window()
    )
    .unwrap();
    let lf: Vec<f64> = results.iter().filter_map(|r| r.late_forgetting).collect();
    if !lf.is_empty() {
        let (m, s) = mean_std(&lf);
        writeln!(txt, "mean forgetting (last quarter of rounds): {m:.4} ± {s:.4}").unwrap();
    }
    writeln!(txt, "partition hashes:").unwrap();
    for r in results {
        writeln!(txt, "  seed {}: {}", r.seed, r.partition_hash).unwrap();
    }
    write_file(&dir.join("summary.txt"), &txt)
}

fn write_resolved(dir: &Path, cfg: &ExperimentConfig) -> CliResult<()> {
    create_dir(dir)?;
    write_file(&dir.join("config.resolved.toml"), &cfg.to_toml())
}

/// Runs (config, seed, directory) jobs on the current rayon pool.
fn run_jobs(dataset: &Dataset, jobs: &[(ExperimentConfig, u64, PathBuf)]) -> CliResult<Vec<SeedResult>> {
    jobs.par_iter()
        .map(|(cfg, seed, dir)| run_seed(cfg, dataset, *seed, dir))
        .collect()
}

/// `run`: every repeat seed of one configuration.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<SeedResult>> {
    write_resolved(out, cfg)?;
    let dataset = build_dataset(&cfg.dataset)?;
    let jobs: Vec<_> = cfg
        .seeds()
        .into_iter()
        .map(|s| (cfg.clone(), s, out.join(format!("seed_{s}"))))
        .collect();
    let results = run_jobs(&dataset, &jobs)?;
    write_summary(out, cfg, &results)?;
    Ok(results)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_forgetting: Option<f64>,
}

pub fn sweep_point_dir(axis: SweepAxis, value: f64) -> String {
    format!("{}_{value}", axis.name())
}

/// `sweep`: one sub-run per grid value, consolidated into `sweep.csv` in ascending value order.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<SweepRow>> {
    let spec = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::config("sweep requires a [sweep] section with axis and values"))?;
    write_resolved(out, cfg)?;
    let dataset = build_dataset(&cfg.dataset)?;
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();

    let mut points = Vec::new();
    let mut jobs = Vec::new();
    for &v in &values {
        let mut point = cfg.clone();
        point.sweep = None;
        point.apply_axis(spec.axis, v)?;
        let dir = out.join(sweep_point_dir(spec.axis, v));
        write_resolved(&dir, &point)?;
        for s in point.seeds() {
            jobs.push((point.clone(), s, dir.join(format!("seed_{s}"))));
        }
        points.push((v, point, dir));
    }
    let results = run_jobs(&dataset, &jobs)?;

    let per = cfg.repeats;
    let mut rows = Vec::new();
    let mut csv = String::from("axis,value,mean_trailing_accuracy,std_trailing_accuracy,mean_final_forgetting\n");
    for ((v, point, dir), chunk) in points.iter().zip(results.chunks(per)) {
        write_summary(dir, point, chunk)?;
        let accs: Vec<f64> = chunk.iter().map(|r| r.trailing_accuracy).collect();
        let (m, s) = mean_std(&accs);
        let f = mean_forgetting(chunk);
        writeln!(csv, "{},{v},{m},{s},{}", spec.axis.name(), fmt_opt(f)).unwrap();
        rows.push(SweepRow {
            value: *v,
            mean_accuracy: m,
            std_accuracy: s,
            mean_forgetting: f,
        });
    }
    write_file(&out.join("sweep.csv"), &csv)?;
    Ok(rows)
}

/// One (strategy, loss) pair for `compare`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Variant {
    pub strategy: StrategyConfig,
    pub loss: LossChoice,
}

impl Variant {
    /// `fedavg:ce`, `fedprox=0.01:wsm`, `scaffold:wsm`, `fednova:ce`.
    pub fn parse(s: &str) -> CliResult<Self> {
        let bad = || {
            CliError::config(format!(
                "--variants entry `{s}` must look like fedavg:ce, fedprox=0.01:wsm, scaffold:wsm or fednova:ce"
            ))
        };
        let (strat, loss) = s.trim().split_once(':').ok_or_else(bad)?;
        let loss = match loss {
            "ce" => LossChoice::Ce,
            "wsm" => LossChoice::Wsm,
            _ => return Err(bad()),
        };
        let strategy = match strat.split_once('=') {
            Some(("fedprox", mu)) => {
                let mu: f64 = mu.parse().map_err(|_| bad())?;
                if !(mu >= 0.0 && mu.is_finite()) {
                    return Err(CliError::config(format!("--variants: fedprox mu must be >= 0, got {mu}")));
                }
                StrategyConfig::FedProx { mu }
            }
            Some(_) => return Err(bad()),
            None => match strat {
                "fedavg" => StrategyConfig::FedAvg,
                "scaffold" => StrategyConfig::Scaffold,
                "fednova" => StrategyConfig::FedNova,
                "fedprox" => {
                    return Err(CliError::config(format!(
                        "--variants entry `{s}`: fedprox needs a coefficient, e.g. fedprox=0.01"
                    )))
                }
                _ => return Err(bad()),
            },
        };
        Ok(Self { strategy, loss })
    }

    pub fn parse_list(s: &str) -> CliResult<Vec<Self>> {
        let list: Vec<Self> = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(Self::parse)
            .collect::<CliResult<_>>()?;
        if list.is_empty() {
            return Err(CliError::config("--variants must name at least one strategy:loss pair"));
        }
        Ok(list)
    }

    pub fn label(&self) -> String {
        match self.strategy {
            StrategyConfig::FedProx { mu } => format!("fedprox_mu{mu}_{}", self.loss.name()),
            s => format!("{}_{}", s.name(), self.loss.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub variant: Variant,
    pub results: Vec<SeedResult>,
}

/// `compare`: every variant on the same partitions and seeds; writes `compare.csv`.
pub fn compare(cfg: &ExperimentConfig, variants: &[Variant], out: &Path) -> CliResult<Vec<CompareRow>> {
    if variants.is_empty() {
        return Err(CliError::config("--variants must name at least one strategy:loss pair"));
    }
    write_resolved(out, cfg)?;
    let dataset = build_dataset(&cfg.dataset)?;
    let mut dirs = Vec::new();
    let mut jobs = Vec::new();
    for v in variants {
        let mut vc = cfg.clone();
        vc.federation.set_strategy(v.strategy);
        vc.federation.loss = v.loss;
        vc.validate()?;
        let dir = out.join(v.label());
        write_resolved(&dir, &vc)?;
        for s in vc.seeds() {
            jobs.push((vc.clone(), s, dir.join(format!("seed_{s}"))));
        }
        dirs.push((vc, dir));
    }
    let results = run_jobs(&dataset, &jobs)?;

    let mut csv = String::from(
        "strategy,prox_mu,loss,mean_trailing_accuracy,std_trailing_accuracy,mean_final_forgetting,partition_hash\n",
    );
    let mut rows = Vec::new();
    for ((v, (vc, dir)), chunk) in variants.iter().zip(&dirs).zip(results.chunks(cfg.repeats)) {
        write_summary(dir, vc, chunk)?;
        let accs: Vec<f64> = chunk.iter().map(|r| r.trailing_accuracy).collect();
        let (m, s) = mean_std(&accs);
        let mu = match v.strategy {
            StrategyConfig::FedProx { mu } => mu.to_string(),
            _ => String::new(),
        };
        let hashes: Vec<&str> = chunk.iter().map(|r| r.partition_hash.as_str()).collect();
        writeln!(
            csv,
            "{},{mu},{},{m},{s},{},{}",
            v.strategy.name(),
            v.loss.name(),
            fmt_opt(mean_forgetting(chunk)),
            hashes.join(";")
        )
        .unwrap();
        rows.push(CompareRow {
            variant: *v,
            results: chunk.to_vec(),
        });
    }
    write_file(&out.join("compare.csv"), &csv)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionStats {
    pub seed: u64,
    pub partition_hash: String,
    pub mean_label_entropy: f64,
    pub shard_size: usize,
}

/// `partition-stats`: per-seed class-count manifests plus `partition_stats.csv`.
pub fn partition_stats(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PartitionStats>> {
    write_resolved(out, cfg)?;
    let dataset = build_dataset(&cfg.dataset)?;
    let mut csv = String::from("seed,partition_hash,mean_label_entropy,shard_size\n");
    let mut stats = Vec::new();
    for seed in cfg.seeds() {
        let shards = dirichlet_partition(&dataset, &cfg.partition_config(seed))?;
        write_manifest(&shards, dataset.num_classes(), &out.join(format!("partition_seed_{seed}.csv")))?;
        let st = PartitionStats {
            seed,
            partition_hash: partition_hash(&shards),
            mean_label_entropy: mean_label_entropy(&shards, dataset.num_classes()),
            shard_size: shards[0].train.len() + shards[0].val.len(),
        };
        writeln!(
            csv,
            "{},{},{},{}",
            st.seed, st.partition_hash, st.mean_label_entropy, st.shard_size
        )
        .unwrap();
        stats.push(st);
    }
    write_file(&out.join("partition_stats.csv"), &csv)?;
    Ok(stats)
}
