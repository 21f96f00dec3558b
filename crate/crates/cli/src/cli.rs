//! Command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{self, Variant};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "FEDWSM_OUT";

#[derive(Debug, Parser)]
#[command(name = "fedwsm", version, about = "Deterministic federated-learning simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every repeat seed of one configuration.
    Run(Common),
    /// Run one sub-experiment per value of the config's `[sweep]` axis.
    Sweep(Common),
    /// Run several strategy/loss pairs on identical partitions and seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated pairs such as `fedavg:ce,fedavg:wsm,fedprox=0.01:wsm`.
        #[arg(long)]
        variants: String,
    },
    /// Write per-client class-count manifests and label-entropy statistics.
    PartitionStats(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` and the FEDWSM_OUT root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repeat count override.
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Worker threads for parallel seeds, grid points and clients (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `--out`, then the config's `output_dir`, then `$FEDWSM_OUT/<stem>`, then `runs/<stem>`.
    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        if let Some(o) = &self.out {
            return o.clone();
        }
        if let Some(o) = &cfg.output_dir {
            return o.clone();
        }
        let stem = self.config.file_stem().map(PathBuf::from).unwrap_or_else(|| "run".into());
        match std::env::var_os(OUT_ENV) {
            Some(root) if !root.is_empty() => Path::new(&root).join(stem),
            _ => Path::new("runs").join(stem),
        }
    }
}

fn execute(cmd: &Command) -> CliResult<PathBuf> {
    let (common, variants) = match cmd {
        Command::Run(c) | Command::Sweep(c) | Command::PartitionStats(c) => (c, None),
        Command::Compare { common, variants } => (common, Some(Variant::parse_list(variants)?)),
    };
    let cfg = common.load()?;
    let out = common.out_dir(&cfg);
    let work = || -> CliResult<()> {
        match cmd {
            Command::Run(_) => experiment::run(&cfg, &out).map(drop),
            Command::Sweep(_) => experiment::sweep(&cfg, &out).map(drop),
            Command::Compare { .. } => {
                experiment::compare(&cfg, variants.as_deref().unwrap_or_default(), &out).map(drop)
            }
            Command::PartitionStats(_) => experiment::partition_stats(&cfg, &out).map(drop),
        }
    };
    match common.jobs {
        Some(0) => return Err(CliError::config("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::config(format!("--jobs: {e}")))?
            .install(work)?,
        None => work()?,
    }
    Ok(out)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            println!("wrote {}", out.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
