//! Ablation matrix: grounded-planner variants evaluated on identical
//! episode sets so every comparison is paired.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collocation::{ActionParam, AlignmentMetric, SolverConfig};
use crate::error::{Error, Result};
use crate::executor::MpcConfig;
use crate::rng::RngStream;
use crate::worldmodel::WorldModel;

use super::campaign::{generate_episode, run_episode, EpisodeSetup};
use super::config::CampaignSpec;
use super::{CellRow, EpisodeRow, EvalReport, Method};

/// The ablation rows. `Full` is the reference method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationVariant {
    Full,
    /// Random latent init and no alignment loss.
    NoVideoGuidance,
    /// Random latent init, alignment loss kept.
    NoVideoInit,
    /// Guidance init kept, alignment loss removed.
    NoVideoLoss,
    /// Latents frozen to the encoded guidance; actions only.
    NoCollocation,
    /// Projected clipping instead of the tanh parameterization.
    ProjectedSgd,
    /// One solve, open-loop execution.
    OpenLoop,
    /// No sampling refinement.
    NoRefinement,
    /// Plain MSE alignment instead of the scale-invariant loss.
    MseAlignment,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 9] = [
        AblationVariant::Full,
        AblationVariant::NoVideoGuidance,
        AblationVariant::NoVideoInit,
        AblationVariant::NoVideoLoss,
        AblationVariant::NoCollocation,
        AblationVariant::ProjectedSgd,
        AblationVariant::OpenLoop,
        AblationVariant::NoRefinement,
        AblationVariant::MseAlignment,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            AblationVariant::Full => "gvpwm",
            AblationVariant::NoVideoGuidance => "gvpwm_no_video_guidance",
            AblationVariant::NoVideoInit => "gvpwm_no_video_init",
            AblationVariant::NoVideoLoss => "gvpwm_no_video_loss",
            AblationVariant::NoCollocation => "gvpwm_no_collocation",
            AblationVariant::ProjectedSgd => "gvpwm_projected_sgd",
            AblationVariant::OpenLoop => "gvpwm_open_loop",
            AblationVariant::NoRefinement => "gvpwm_no_refinement",
            AblationVariant::MseAlignment => "gvpwm_mse_alignment",
        }
    }

    /// Derive this variant's solver and executor configuration from the
    /// campaign baselines.
    pub fn configs(&self, base_solver: &SolverConfig, base_mpc: &MpcConfig) -> (SolverConfig, MpcConfig) {
        let mut solver = *base_solver;
        let mut mpc = *base_mpc;
        match self {
            AblationVariant::Full => {}
            AblationVariant::NoVideoGuidance => {
                solver.weights.lambda_v = 0.0;
                mpc.random_z_init = true;
            }
            AblationVariant::NoVideoInit => {
                mpc.random_z_init = true;
            }
            AblationVariant::NoVideoLoss => {
                solver.weights.lambda_v = 0.0;
            }
            AblationVariant::NoCollocation => {
                // the plan's latents are taken as-is, current state included:
                // the solver inverts the guidance trajectory open loop
                solver.freeze_latents = true;
                mpc.pin_current = false;
            }
            AblationVariant::ProjectedSgd => {
                solver.action_param = ActionParam::ProjectedClip;
            }
            AblationVariant::OpenLoop => {
                mpc.open_loop = true;
            }
            AblationVariant::NoRefinement => {
                mpc.refine_samples = 0;
            }
            AblationVariant::MseAlignment => {
                solver.metric = AlignmentMetric::Mse;
            }
        }
        (solver, mpc)
    }
}

mod labels {
    pub const WORLD_MODEL: u64 = 1;
    pub const EPISODES: u64 = 2;
}

/// Run the full ablation matrix over the campaign's (horizon, source) cells.
/// Every variant sees the identical episode set; the report's `method`
/// column carries the variant label.
pub fn ablation_suite(campaign: &CampaignSpec, jobs: Option<usize>) -> Result<EvalReport> {
    let master = RngStream::new(campaign.seed);
    let model = WorldModel::analytic_default(&campaign.env, &master.fork(labels::WORLD_MODEL))?;

    let mut setups: Vec<Vec<EpisodeSetup>> = Vec::with_capacity(campaign.horizons.len());
    for &horizon in &campaign.horizons {
        let episodes_stream = master.fork(labels::EPISODES).fork(horizon as u64);
        let mut list = Vec::with_capacity(campaign.episodes);
        for i in 0..campaign.episodes {
            list.push(generate_episode(&campaign.env, horizon, i, &episodes_stream)?);
        }
        setups.push(list);
    }

    struct Job {
        hi: usize,
        horizon: usize,
        source: super::SourceSpec,
        variant: AblationVariant,
        episode: usize,
    }

    let mut jobs_list = Vec::new();
    for (hi, &horizon) in campaign.horizons.iter().enumerate() {
        for &source in &campaign.sources {
            for &variant in &AblationVariant::ALL {
                for episode in 0..campaign.episodes {
                    jobs_list.push(Job {
                        hi,
                        horizon,
                        source,
                        variant,
                        episode,
                    });
                }
            }
        }
    }

    let run_one = |job: &Job| -> EpisodeRow {
        let setup = &setups[job.hi][job.episode];
        let (solver, mpc) = job.variant.configs(&campaign.solver, &campaign.mpc);
        let mut variant_campaign = campaign.clone();
        variant_campaign.solver = solver;
        variant_campaign.mpc = mpc;
        let episodes_stream = master.fork(labels::EPISODES).fork(job.horizon as u64);
        let episode_stream = episodes_stream.fork(job.episode as u64);
        let result = run_episode(
            &variant_campaign,
            &model,
            setup,
            job.horizon,
            job.source,
            Method::Gvpwm,
            &episode_stream,
        );
        EpisodeRow {
            env: campaign.env_name.clone(),
            horizon: job.horizon,
            source: job.source.to_string(),
            method: job.variant.label().to_string(),
            episode: job.episode,
            success: result.success,
            final_distance: result.final_distance,
            aborted: result.aborted,
            final_max_residual: result.final_solve_residual(),
            wall_seconds: if campaign.measure_seconds {
                result.wall_seconds
            } else {
                0.0
            },
            replans: result.replans,
        }
    };

    let mut episodes: Vec<EpisodeRow> = match jobs {
        Some(1) => jobs_list.iter().map(run_one).collect(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| jobs_list.par_iter().map(run_one).collect())
        }
        None => jobs_list.par_iter().map(run_one).collect(),
    };

    episodes.sort_by(|a, b| {
        (a.horizon, &a.source, &a.method, a.episode).cmp(&(
            b.horizon,
            &b.source,
            &b.method,
            b.episode,
        ))
    });

    let mut cells = Vec::new();
    for &horizon in &campaign.horizons {
        for &source in &campaign.sources {
            for &variant in &AblationVariant::ALL {
                let label = variant.label();
                let group: Vec<&EpisodeRow> = episodes
                    .iter()
                    .filter(|e| {
                        e.horizon == horizon
                            && e.source == source.to_string()
                            && e.method == label
                    })
                    .collect();
                if group.is_empty() {
                    continue;
                }
                let n = group.len();
                let successes = group.iter().filter(|e| e.success).count();
                let mean_dist = group
                    .iter()
                    .map(|e| if e.final_distance.is_finite() { e.final_distance } else { 1.0 })
                    .sum::<f64>()
                    / n as f64;
                let mean_seconds = group.iter().map(|e| e.wall_seconds).sum::<f64>() / n as f64;
                cells.push(CellRow {
                    env: campaign.env_name.clone(),
                    horizon,
                    source: source.to_string(),
                    method: label.to_string(),
                    episodes: n,
                    successes,
                    success_rate: successes as f64 / n as f64,
                    mean_dist,
                    mean_seconds,
                });
            }
        }
    }
    Ok(EvalReport { cells, episodes })
}
