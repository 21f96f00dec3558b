use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::forgetting::ClientMatrix;
use crate::error::{Error, Result};

/// Everything recorded about one federated round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// 1-based round index.
    pub round: usize,
    pub participants: Vec<usize>,
    /// Global model on the pooled client validation splits.
    pub global_val_acc: Option<f64>,
    /// Global model on the held-out test split.
    pub global_test_acc: Option<f64>,
    /// Global model on each client's validation split.
    pub client_acc: Vec<Option<f64>>,
    /// `F_k` per client; empty when fewer than two clients exist.
    pub avg_forgetting: Vec<Option<f64>>,
    /// Mean of the defined `F_k`.
    pub mean_forgetting: Option<f64>,
    /// Full `F_ki` matrix, kept on metric-sampling rounds only.
    pub forgetting: Option<ClientMatrix>,
    /// `Acc_k(w_t^i)` matrix, kept alongside `forgetting`.
    pub client_model_acc: Option<ClientMatrix>,
    /// `||c||` of the SCAFFOLD server control variate.
    pub control_norm: Option<f64>,
}

/// Mean global test accuracy over the last `window` rounds.
pub fn trailing_accuracy(reports: &[RoundReport], window: usize) -> Result<f64> {
    if window == 0 || window > reports.len() {
        return Err(Error::config(format!(
            "trailing window {window} must be between 1 and the number of rounds ({})",
            reports.len()
        )));
    }
    let tail = &reports[reports.len() - window..];
    let mut sum = 0.0;
    for r in tail {
        sum += r
            .global_test_acc
            .ok_or_else(|| Error::UndefinedMetric(format!("round {} has no test accuracy", r.round)))?;
    }
    Ok(sum / window as f64)
}

/// Mean of the per-round `mean_forgetting` over the last quarter of the rounds
/// (at least one round), skipping rounds where it is undefined.
pub fn late_forgetting(reports: &[RoundReport]) -> Option<f64> {
    if reports.is_empty() {
        return None;
    }
    let q = (reports.len() / 4).max(1);
    let vals: Vec<f64> = reports[reports.len() - q..].iter().filter_map(|r| r.mean_forgetting).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

pub const ROUND_LOG_HEADER: &str = "round,global_val_acc,global_test_acc,mean_forgetting,control_norm";

fn opt(s: &mut String, v: Option<f64>) {
    s.push(',');
    if let Some(v) = v {
        write!(s, "{v}").unwrap();
    }
}

/// One CSV line (LF-terminated) for the round log.
pub fn round_log_line(r: &RoundReport) -> String {
    let mut s = r.round.to_string();
    opt(&mut s, r.global_val_acc);
    opt(&mut s, r.global_test_acc);
    opt(&mut s, r.mean_forgetting);
    opt(&mut s, r.control_norm);
    s.push('\n');
    s
}

/// Append-only round log.
pub struct RoundLog {
    path: PathBuf,
    file: File,
}

impl RoundLog {
    /// Creates (truncating) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
        writeln!(file, "{ROUND_LOG_HEADER}").map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            file,
        })
    }

    /// Opens an existing log for appending.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_owned(),
            file,
        })
    }

    pub fn write(&mut self, r: &RoundReport) -> Result<()> {
        self.file
            .write_all(round_log_line(r).as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }
}
