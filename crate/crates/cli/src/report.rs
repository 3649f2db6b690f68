//! Metrics reports written as JSON.
//!
//! Everything that varies between identical runs (wall clock, memory) lives
//! under `timing`, so two reports of the same configuration and seed agree
//! once that key is dropped.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

impl Environment {
    pub fn current() -> Self {
        Environment {
            version: env!("CARGO_PKG_VERSION").into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Wall-clock seconds per phase.
    pub phases: BTreeMap<String, f64>,
    /// Peak resident set size of the process in KiB. Not comparable to GPU
    /// memory figures.
    pub peak_rss_kib: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub label: String,
    pub count: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEntry {
    pub label: String,
    pub params: usize,
    pub steps: usize,
    pub final_train: f64,
    pub final_test: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub name: String,
    pub scheme: String,
    pub binding: String,
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub ml2re: Option<f64>,
    pub mae: Option<f64>,
    pub mre: Option<f64>,
    pub interface_mismatch: Option<f64>,
    /// Parameter count per subdomain net.
    pub params: BTreeMap<String, usize>,
    /// Error line when the run failed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub command: String,
    pub seed: u64,
    pub datasets: Vec<DatasetEntry>,
    pub training: Vec<TrainEntry>,
    pub runs: Vec<RunEntry>,
    pub environment: Environment,
    pub timing: Timing,
}

impl MetricsReport {
    pub fn new(command: &str, seed: u64) -> Self {
        MetricsReport {
            command: command.into(),
            seed,
            datasets: Vec::new(),
            training: Vec::new(),
            runs: Vec::new(),
            environment: Environment::current(),
            timing: Timing::default(),
        }
    }

    pub fn phase(&mut self, name: &str, seconds: f64) {
        *self.timing.phases.entry(name.into()).or_insert(0.0) += seconds;
    }

    pub fn finish(&mut self) {
        self.timing.peak_rss_kib = peak_rss_kib();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// `VmHWM` from `/proc/self/status` where available.
fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}
