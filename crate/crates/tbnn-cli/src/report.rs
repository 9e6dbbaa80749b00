//! Report documents written by every subcommand: a versioned JSON tree plus
//! the plain-text summary printed to stdout.

use serde::Serialize;
use tbnn::data::{MetricSet, NormalizeMode, OodReport};

pub const SCHEMA_VERSION: u32 = 1;

/// Configuration echo embedded in every report.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub data: String,
    pub target_col: Option<usize>,
    pub has_header: bool,
    pub hidden: Vec<usize>,
    pub nu0: f64,
    pub scale0: f64,
    pub noise_var: f64,
    pub runs: usize,
    pub seed: u64,
    pub normalize: NormalizeMode,
    pub ood: bool,
    pub ood_std: String,
    pub train_frac: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub run: usize,
    /// Seed that drove this run's split shuffle (the training order) and,
    /// re-derived, its weight initialization.
    pub order_seed: u64,
    /// FNV-1a digest of the shuffled row order, so the permutation is
    /// recorded without storing the full index vector.
    pub order_digest: String,
    pub metrics: Option<MetricSet>,
    pub ood: Option<OodReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub rmse_median: f64,
    pub rmse_std: f64,
    pub nll_median: f64,
    pub nll_std: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OodAggregate {
    pub scale01_rmse_median: f64,
    pub scale01_nll_median: f64,
    pub scale2_rmse_median: f64,
    pub scale2_nll_median: f64,
    pub plus3std_rmse_median: f64,
    pub plus3std_nll_median: f64,
    pub delta_rmse_pct_median: Option<f64>,
    pub delta_nll_pct_median: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timings {
    pub load_s: f64,
    pub train_eval_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub config: ConfigEcho,
    pub runs: Vec<RunOutcome>,
    pub aggregate: Option<Aggregate>,
    pub ood_aggregate: Option<OodAggregate>,
    pub timings: Timings,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub axis: String,
    pub values: Vec<f64>,
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub input_dim: usize,
    pub samples: usize,
    pub widths: Vec<usize>,
    pub median_per_sample_us: Vec<f64>,
    /// Largest-width median over smallest-width median.
    pub ratio: f64,
    pub timings: Timings,
}

#[derive(Debug, Serialize)]
pub struct OracleRunReport {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub command: &'static str,
    pub checks: Vec<tbnn::oracle::OracleReport>,
    pub failures: usize,
}

pub fn tool_version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return f64::NAN;
    }
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// FNV-1a over little-endian row indices.
pub fn permutation_digest(order: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for i in order {
        for b in (*i as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("fnv1a:{h:016x}")
}
