//! Experiment campaigns: deterministic episode suites over (environment,
//! horizon, plan source, method), parallel execution, success-rate
//! aggregation, the ablation matrix, report emission, and the CLI.

pub mod ablation;
pub mod campaign;
pub mod cli;
pub mod config;
pub mod gradcheck;
pub mod oracle_lq;
pub mod report;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::videoplan::PlanSource;

/// Planning method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gvpwm,
    MpcCem,
    MpcGd,
    Unipi,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gvpwm => write!(f, "gvpwm"),
            Method::MpcCem => write!(f, "mpc_cem"),
            Method::MpcGd => write!(f, "mpc_gd"),
            Method::Unipi => write!(f, "unipi"),
        }
    }
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "gvpwm" | "gvp_wm" | "gvp-wm" => Ok(Method::Gvpwm),
            "mpc_cem" | "mpc-cem" | "cem" => Ok(Method::MpcCem),
            "mpc_gd" | "mpc-gd" | "gd" => Ok(Method::MpcGd),
            "unipi" => Ok(Method::Unipi),
            other => Err(Error::InvalidConfig(format!("unknown method {other}"))),
        }
    }

    /// Stable label used to fork per-method random streams.
    pub fn rng_label(&self) -> u64 {
        match self {
            Method::Gvpwm => 101,
            Method::MpcCem => 102,
            Method::MpcGd => 103,
            Method::Unipi => 104,
        }
    }
}

/// Plan source requested for a campaign cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceSpec {
    Oracle,
    Blur(usize),
    Teleport,
    Drift,
}

impl fmt::Display for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Oracle => write!(f, "ORACLE"),
            SourceSpec::Blur(k) => write!(f, "BLUR_{k}"),
            SourceSpec::Teleport => write!(f, "TELEPORT"),
            SourceSpec::Drift => write!(f, "DRIFT"),
        }
    }
}

impl SourceSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let up = s.trim().to_uppercase();
        match up.as_str() {
            "ORACLE" => return Ok(SourceSpec::Oracle),
            "TELEPORT" => return Ok(SourceSpec::Teleport),
            "DRIFT" => return Ok(SourceSpec::Drift),
            _ => {}
        }
        if let Some(k) = up.strip_prefix("BLUR_").or_else(|| up.strip_prefix("BLUR")) {
            let k: usize = k
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad blur source {s}")))?;
            if k < 1 {
                return Err(Error::InvalidConfig("blur window must be >= 1".into()));
            }
            return Ok(SourceSpec::Blur(k));
        }
        Err(Error::InvalidConfig(format!("unknown plan source {s}")))
    }

    pub fn to_plan_source(self) -> PlanSource {
        match self {
            SourceSpec::Oracle => PlanSource::Oracle,
            SourceSpec::Blur(k) => PlanSource::Blur(k),
            SourceSpec::Teleport => PlanSource::Teleport,
            SourceSpec::Drift => PlanSource::Drift,
        }
    }

    /// Stable label used to fork per-source random streams.
    pub fn rng_label(&self) -> u64 {
        match self {
            SourceSpec::Oracle => 201,
            SourceSpec::Blur(k) => 210 + *k as u64,
            SourceSpec::Teleport => 202,
            SourceSpec::Drift => 203,
        }
    }
}

/// One aggregated report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub env: String,
    pub horizon: usize,
    pub source: String,
    pub method: String,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_dist: f64,
    pub mean_seconds: f64,
}

/// Per-episode outcome kept for logs and paired comparisons.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub env: String,
    pub horizon: usize,
    pub source: String,
    pub method: String,
    pub episode: usize,
    pub success: bool,
    pub final_distance: f64,
    pub aborted: bool,
    pub final_max_residual: Option<f64>,
    pub wall_seconds: f64,
    pub replans: Vec<crate::executor::ReplanDiag>,
}

/// Aggregated campaign output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<CellRow>,
    pub episodes: Vec<EpisodeRow>,
}

impl EvalReport {
    pub fn cell(&self, source: &str, method: &str) -> Option<&CellRow> {
        self.cells
            .iter()
            .find(|c| c.source == source && c.method == method)
    }
}
