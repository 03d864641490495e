//! Campaign configuration: a TOML file with nested sections. Unknown keys
//! are hard errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{CemConfig, GdConfig};
use crate::collocation::{ActionParam, AlignmentMetric, SolverConfig};
use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::executor::MpcConfig;
use crate::opt::AdamParams;
use crate::types::WeightConfig;

use super::{Method, SourceSpec};

fn default_horizons() -> Vec<usize> {
    vec![25]
}

fn default_sources() -> Vec<String> {
    vec!["oracle".into()]
}

fn default_methods() -> Vec<String> {
    vec!["gvpwm".into()]
}

fn default_episodes() -> usize {
    50
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    pub env: String,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_sources")]
    pub sources: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Report wall-clock seconds in the CSV. Off by default so reports are
    /// byte-identical across re-runs and worker counts.
    #[serde(default)]
    pub measure_seconds: bool,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub lambda_v: Option<f64>,
    pub lambda_g: Option<f64>,
    pub lambda_r: Option<f64>,
    pub inner_iters: Option<usize>,
    pub outer_iters: Option<usize>,
    pub rho0: Option<f64>,
    pub gamma: Option<f64>,
    pub rho_max: Option<f64>,
    pub lr: Option<f64>,
    pub lr_decay: Option<f64>,
    pub metric: Option<String>,
    pub tau_dyn: Option<f64>,
    pub action_param: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSection {
    pub k: Option<usize>,
    pub refine: Option<bool>,
    pub refine_samples: Option<usize>,
    pub refine_std: Option<f64>,
    pub open_loop: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CemSection {
    pub population: Option<usize>,
    pub elites: Option<usize>,
    pub iterations: Option<usize>,
    pub init_std_scale: Option<f64>,
    pub std_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GdSection {
    pub iterations: Option<usize>,
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionSection {
    /// First replaced frame of the teleport cut.
    pub teleport_cut_start: Option<usize>,
    /// Length of the teleport cut; 0 picks `max(3, horizon / 3)`.
    pub teleport_cut_len: Option<usize>,
    pub drift_sigma0: Option<f64>,
    pub drift_growth: Option<f64>,
}

/// Raw parsed configuration file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub campaign: CampaignSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub cem: CemSection,
    #[serde(default)]
    pub gd: GdSection,
    #[serde(default)]
    pub corruption: CorruptionSection,
}

/// Fully resolved campaign specification.
#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub env: EnvSpec,
    pub env_name: String,
    pub horizons: Vec<usize>,
    pub sources: Vec<SourceSpec>,
    pub methods: Vec<Method>,
    pub episodes: usize,
    pub seed: u64,
    pub measure_seconds: bool,
    pub solver: SolverConfig,
    pub mpc: MpcConfig,
    pub cem: CemConfig,
    pub gd: GdConfig,
    pub teleport_cut_start: usize,
    pub teleport_cut_len: usize,
    pub drift_sigma0: f64,
    pub drift_growth: f64,
}

impl ConfigFile {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{e}")))
    }

    pub fn resolve(&self) -> Result<CampaignSpec> {
        let env_name = self.campaign.env.trim().to_lowercase();
        let env = match env_name.as_str() {
            "wallnav" | "wall" => EnvSpec::wallnav(),
            "pushtoy" | "push" => EnvSpec::pushtoy(),
            other => {
                return Err(Error::InvalidConfig(format!("unknown env {other}")));
            }
        };
        env.validate()?;
        if self.campaign.episodes < 1 {
            return Err(Error::InvalidConfig("episodes must be >= 1".into()));
        }
        if self.campaign.horizons.is_empty() || self.campaign.horizons.iter().any(|&h| h < 2) {
            return Err(Error::InvalidConfig("horizons must all be >= 2".into()));
        }
        let sources = self
            .campaign
            .sources
            .iter()
            .map(|s| SourceSpec::parse(s))
            .collect::<Result<Vec<_>>>()?;
        let methods = self
            .campaign
            .methods
            .iter()
            .map(|m| Method::parse(m))
            .collect::<Result<Vec<_>>>()?;

        let mut solver = SolverConfig::default();
        let s = &self.solver;
        let w = WeightConfig {
            lambda_v: s.lambda_v.unwrap_or(solver.weights.lambda_v),
            lambda_g: s.lambda_g.unwrap_or(solver.weights.lambda_g),
            lambda_r: s.lambda_r.unwrap_or(solver.weights.lambda_r),
        };
        solver.weights = w;
        if let Some(v) = s.inner_iters {
            solver.inner_iters = v;
        }
        if let Some(v) = s.outer_iters {
            solver.outer_iters = v;
        }
        if let Some(v) = s.rho0 {
            solver.rho0 = v;
        }
        if let Some(v) = s.gamma {
            solver.gamma = v;
        }
        if let Some(v) = s.rho_max {
            solver.rho_max = v;
        }
        if let Some(v) = s.lr {
            solver.adam = AdamParams {
                lr: v,
                ..solver.adam
            };
        }
        if let Some(v) = s.lr_decay {
            solver.lr_decay = v;
        }
        if let Some(v) = s.tau_dyn {
            solver.tau_dyn = v;
        }
        if let Some(ref metric) = s.metric {
            solver.metric = match metric.trim().to_lowercase().as_str() {
                "cosine" => AlignmentMetric::Cosine,
                "mse" => AlignmentMetric::Mse,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown metric {other}")));
                }
            };
        }
        if let Some(ref param) = s.action_param {
            solver.action_param = match param.trim().to_lowercase().as_str() {
                "tanh" => ActionParam::Tanh,
                "projected" | "projected_clip" | "clip" => ActionParam::ProjectedClip,
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown action parameterization {other}"
                    )));
                }
            };
        }
        solver.validate()?;

        let mut mpc = MpcConfig::default();
        if let Some(v) = self.mpc.k {
            mpc.k = v;
        }
        if let Some(v) = self.mpc.refine {
            mpc.refine = v;
        }
        if let Some(v) = self.mpc.refine_samples {
            mpc.refine_samples = v;
        }
        if let Some(v) = self.mpc.refine_std {
            mpc.refine_std = v;
        }
        if let Some(v) = self.mpc.open_loop {
            mpc.open_loop = v;
        }
        mpc.validate()?;

        let mut cem = CemConfig::default();
        if let Some(v) = self.cem.population {
            cem.population = v;
        }
        if let Some(v) = self.cem.elites {
            cem.elites = v;
        }
        if let Some(v) = self.cem.iterations {
            cem.iterations = v;
        }
        if let Some(v) = self.cem.init_std_scale {
            cem.init_std_scale = v;
        }
        if let Some(v) = self.cem.std_floor {
            cem.std_floor = v;
        }
        cem.validate()?;

        let mut gd = GdConfig::default();
        if let Some(v) = self.gd.iterations {
            gd.iterations = v;
        }
        if let Some(v) = self.gd.lr {
            gd.adam = AdamParams::with_lr(v);
        }

        Ok(CampaignSpec {
            env,
            env_name,
            horizons: self.campaign.horizons.clone(),
            sources,
            methods,
            episodes: self.campaign.episodes,
            seed: self.campaign.seed,
            measure_seconds: self.campaign.measure_seconds,
            solver,
            mpc,
            cem,
            gd,
            teleport_cut_start: self.corruption.teleport_cut_start.unwrap_or(2),
            teleport_cut_len: self.corruption.teleport_cut_len.unwrap_or(0),
            drift_sigma0: self.corruption.drift_sigma0.unwrap_or(0.05),
            drift_growth: self.corruption.drift_growth.unwrap_or(1.1),
        })
    }
}

impl CampaignSpec {
    /// Minimal programmatic spec (used by tests and the acceptance suite).
    pub fn minimal(env: &str, horizon: usize, episodes: usize, seed: u64) -> Result<Self> {
        let file = ConfigFile {
            campaign: CampaignSection {
                env: env.into(),
                horizons: vec![horizon],
                sources: default_sources(),
                methods: default_methods(),
                episodes,
                seed,
                measure_seconds: false,
            },
            solver: SolverSection::default(),
            mpc: MpcSection::default(),
            cem: CemSection::default(),
            gd: GdSection::default(),
            corruption: CorruptionSection::default(),
        };
        file.resolve()
    }

    /// Effective teleport cut for a horizon.
    pub fn teleport_cut(&self, horizon: usize) -> (usize, usize) {
        let start = self.teleport_cut_start.max(1);
        let auto = (horizon / 3).max(3);
        let len = if self.teleport_cut_len == 0 {
            auto
        } else {
            self.teleport_cut_len
        };
        let len = len.min(horizon.saturating_sub(1).saturating_sub(start));
        (start, len)
    }
}
