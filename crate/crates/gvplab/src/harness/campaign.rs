//! Campaign execution: deterministic episode suites run in parallel.
//!
//! Episode randomness derives from the master seed and the episode's own
//! coordinates (environment, horizon, index) only, never from scheduling:
//! every plan source and method sees the identical start/goal set, which
//! makes ablation and method comparisons paired.

use nalgebra::Vector2;
use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{shooting_mpc_run, unipi_execute, ShootingPlanner};
use crate::envs::{expert_plan, EnvKind, EnvSpec, EnvState, Goal};
use crate::error::{Error, Result};
use crate::executor::{mpc_run, EpisodeResult};
use crate::rng::RngStream;
use crate::types::Observation;
use crate::videoplan::{corrupt_blur, corrupt_drift, corrupt_teleport, VideoPlan};
use crate::worldmodel::WorldModel;

use super::config::CampaignSpec;
use super::{CellRow, EpisodeRow, EvalReport, Method, SourceSpec};

/// Fork labels for the campaign's deterministic stream tree.
mod labels {
    pub const WORLD_MODEL: u64 = 1;
    pub const EPISODES: u64 = 2;
    pub const EXECUTION: u64 = 3;
}

/// A generated evaluation episode: feasible start, reachable goal.
#[derive(Debug, Clone)]
pub struct EpisodeSetup {
    pub s0: EnvState,
    pub goal: Goal,
}

/// Deterministically sample a reachable (start, goal) pair.
///
/// WallNav pairs straddle the wall (alternating sides by episode parity), so
/// every episode actually exercises barrier routing; PushToy samples a block
/// in the interior with a push target a moderate distance away. Pairs are
/// rejection-sampled until the expert solves them within the horizon.
pub fn generate_episode(
    spec: &EnvSpec,
    horizon: usize,
    episode_index: usize,
    episodes_stream: &RngStream,
) -> Result<EpisodeSetup> {
    let ep_stream = episodes_stream.fork(episode_index as u64);
    for attempt in 0..200u64 {
        let mut rng = ep_stream.fork(attempt).rng();
        let candidate = match spec.kind {
            EnvKind::WallNav { .. } => {
                let left_start = episode_index % 2 == 0;
                let x_start = if left_start {
                    rng.gen_range(0.05..0.35)
                } else {
                    rng.gen_range(0.65..0.95)
                };
                let x_goal = if left_start {
                    rng.gen_range(0.65..0.95)
                } else {
                    rng.gen_range(0.05..0.35)
                };
                let s0 = EnvState {
                    agent: Vector2::new(x_start, rng.gen_range(0.05..0.95)),
                    block: None,
                };
                let goal = Goal {
                    target: Observation::from_slice(&[x_goal, rng.gen_range(0.05..0.95)]),
                };
                EpisodeSetup { s0, goal }
            }
            EnvKind::PushToy {
                agent_radius,
                block_radius,
            } => {
                let rsum = agent_radius + block_radius;
                let block = Vector2::new(rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7));
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let dist = rng.gen_range(0.25..0.45);
                let goal_block = Vector2::new(
                    (block.x + dist * angle.cos()).clamp(0.2, 0.8),
                    (block.y + dist * angle.sin()).clamp(0.2, 0.8),
                );
                let agent = loop {
                    let a = Vector2::new(rng.gen::<f64>(), rng.gen::<f64>());
                    if (a - block).norm() >= rsum {
                        break a;
                    }
                };
                let push_dir = (goal_block - block).normalize();
                let goal_agent = goal_block - push_dir * rsum;
                EpisodeSetup {
                    s0: EnvState {
                        agent,
                        block: Some(block),
                    },
                    goal: Goal {
                        target: Observation::from_slice(&[
                            goal_agent.x,
                            goal_agent.y,
                            goal_block.x,
                            goal_block.y,
                        ]),
                    },
                }
            }
        };
        if expert_plan(spec, &candidate.s0, &candidate.goal, horizon).is_ok() {
            return Ok(candidate);
        }
    }
    Err(Error::UnreachableWithinHorizon(format!(
        "no reachable episode found for index {episode_index}"
    )))
}

/// Build the guidance plan for one episode and source.
pub fn build_plan(
    campaign: &CampaignSpec,
    setup: &EpisodeSetup,
    horizon: usize,
    source: SourceSpec,
    episode_stream: &RngStream,
) -> Result<VideoPlan> {
    let oracle = crate::videoplan::make_oracle_plan(&campaign.env, &setup.s0, &setup.goal, horizon)?;
    match source {
        SourceSpec::Oracle => Ok(oracle),
        SourceSpec::Blur(k) => corrupt_blur(&oracle, k),
        SourceSpec::Teleport => {
            let (start, len) = campaign.teleport_cut(horizon);
            corrupt_teleport(&oracle, start, len)
        }
        SourceSpec::Drift => corrupt_drift(
            &oracle,
            campaign.drift_sigma0,
            campaign.drift_growth,
            &episode_stream.fork(source.rng_label()),
        ),
    }
}

/// Run one (episode, source, method) cell entry.
pub fn run_episode(
    campaign: &CampaignSpec,
    model: &WorldModel,
    setup: &EpisodeSetup,
    horizon: usize,
    source: SourceSpec,
    method: Method,
    episode_stream: &RngStream,
) -> EpisodeResult {
    let exec_stream = episode_stream
        .fork(labels::EXECUTION)
        .fork(method.rng_label());
    let outcome = match method {
        Method::Gvpwm => build_plan(campaign, setup, horizon, source, episode_stream).and_then(
            |plan| {
                mpc_run(
                    &campaign.env,
                    &setup.s0,
                    &setup.goal,
                    &plan,
                    model,
                    &campaign.solver,
                    &campaign.mpc,
                    &exec_stream,
                )
            },
        ),
        Method::Unipi => build_plan(campaign, setup, horizon, source, episode_stream)
            .map(|plan| unipi_execute(&campaign.env, &setup.s0, &setup.goal, &plan)),
        Method::MpcCem => shooting_mpc_run(
            &campaign.env,
            &setup.s0,
            &setup.goal,
            model,
            &ShootingPlanner::Cem(campaign.cem),
            horizon,
            campaign.mpc.k,
            &exec_stream,
        ),
        Method::MpcGd => shooting_mpc_run(
            &campaign.env,
            &setup.s0,
            &setup.goal,
            model,
            &ShootingPlanner::Gd(campaign.gd),
            horizon,
            campaign.mpc.k,
            &exec_stream,
        ),
    };
    outcome.unwrap_or_else(|_| EpisodeResult {
        success: false,
        final_distance: f64::INFINITY,
        steps: 0,
        replans: Vec::new(),
        wall_seconds: 0.0,
        aborted: true,
        executed_actions: Vec::new(),
    })
}

struct Job {
    horizon: usize,
    source: SourceSpec,
    method: Method,
    episode: usize,
}

/// Run a full campaign. Deterministic for a fixed spec regardless of the
/// worker count; pass `jobs = Some(1)` for single-threaded execution.
pub fn run_campaign(campaign: &CampaignSpec, jobs: Option<usize>) -> Result<EvalReport> {
    let master = RngStream::new(campaign.seed);
    let model = WorldModel::analytic_default(&campaign.env, &master.fork(labels::WORLD_MODEL))?;

    // generate the shared episode sets up front, one per horizon
    let mut setups: Vec<Vec<EpisodeSetup>> = Vec::with_capacity(campaign.horizons.len());
    for &horizon in &campaign.horizons {
        let episodes_stream = master.fork(labels::EPISODES).fork(horizon as u64);
        let mut list = Vec::with_capacity(campaign.episodes);
        for i in 0..campaign.episodes {
            list.push(generate_episode(&campaign.env, horizon, i, &episodes_stream)?);
        }
        setups.push(list);
    }

    let mut jobs_list = Vec::new();
    for (hi, &horizon) in campaign.horizons.iter().enumerate() {
        for &source in &campaign.sources {
            for &method in &campaign.methods {
                for episode in 0..campaign.episodes {
                    jobs_list.push((
                        hi,
                        Job {
                            horizon,
                            source,
                            method,
                            episode,
                        },
                    ));
                }
            }
        }
    }

    let run_one = |(hi, job): &(usize, Job)| -> EpisodeRow {
        let setup = &setups[*hi][job.episode];
        let episodes_stream = master.fork(labels::EPISODES).fork(job.horizon as u64);
        let episode_stream = episodes_stream.fork(job.episode as u64);
        let result = run_episode(
            campaign,
            &model,
            setup,
            job.horizon,
            job.source,
            job.method,
            &episode_stream,
        );
        EpisodeRow {
            env: campaign.env_name.clone(),
            horizon: job.horizon,
            source: job.source.to_string(),
            method: job.method.to_string(),
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

    let episodes: Vec<EpisodeRow> = match jobs {
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

    Ok(aggregate(campaign, episodes))
}

fn aggregate(campaign: &CampaignSpec, mut episodes: Vec<EpisodeRow>) -> EvalReport {
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
            for &method in &campaign.methods {
                let group: Vec<&EpisodeRow> = episodes
                    .iter()
                    .filter(|e| {
                        e.horizon == horizon
                            && e.source == source.to_string()
                            && e.method == method.to_string()
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
                    method: method.to_string(),
                    episodes: n,
                    successes,
                    success_rate: successes as f64 / n as f64,
                    mean_dist,
                    mean_seconds,
                });
            }
        }
    }
    EvalReport { cells, episodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::env_success;

    fn tiny_spec(sources: &[&str], methods: &[&str], episodes: usize) -> CampaignSpec {
        let mut spec = CampaignSpec::minimal("wallnav", 25, episodes, 11).unwrap();
        spec.sources = sources.iter().map(|s| SourceSpec::parse(s).unwrap()).collect();
        spec.methods = methods.iter().map(|m| Method::parse(m).unwrap()).collect();
        spec
    }

    #[test]
    fn generated_episodes_are_reachable_and_deterministic() {
        let spec = EnvSpec::wallnav();
        let stream = RngStream::new(3).fork(labels::EPISODES).fork(25);
        for i in 0..5 {
            let a = generate_episode(&spec, 25, i, &stream).unwrap();
            let b = generate_episode(&spec, 25, i, &stream).unwrap();
            assert_eq!(a.s0, b.s0);
            assert_eq!(a.goal, b.goal);
            let (obs, acts) = expert_plan(&spec, &a.s0, &a.goal, 25).unwrap();
            assert_eq!(obs.len(), 26);
            assert_eq!(acts.len(), 25);
            // straddles the wall
            assert!((a.s0.agent.x < 0.5) != (a.goal.target.0[0] < 0.5));
        }
    }

    #[test]
    fn pushtoy_episode_generation_works() {
        let spec = EnvSpec::pushtoy();
        let stream = RngStream::new(4).fork(labels::EPISODES).fork(25);
        let setup = generate_episode(&spec, 25, 0, &stream).unwrap();
        let (_, acts) = expert_plan(&spec, &setup.s0, &setup.goal, 25).unwrap();
        let mut s = setup.s0;
        for a in &acts {
            s = crate::envs::env_step(&spec, &s, a);
        }
        assert!(env_success(&spec, &s, &setup.goal).0);
    }

    #[test]
    fn single_episode_oracle_campaign_succeeds() {
        let spec = tiny_spec(&["oracle"], &["gvpwm"], 1);
        let report = run_campaign(&spec, Some(1)).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.cells[0].success_rate, 1.0);
        assert_eq!(report.cells[0].episodes, 1);
    }

    #[test]
    fn campaign_is_deterministic_across_job_counts() {
        let spec = tiny_spec(&["oracle", "teleport"], &["unipi", "gvpwm"], 3);
        let a = run_campaign(&spec, Some(1)).unwrap();
        let b = run_campaign(&spec, Some(4)).unwrap();
        assert_eq!(
            serde_json::to_string(&a.cells).unwrap(),
            serde_json::to_string(&b.cells).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&a.episodes).unwrap(),
            serde_json::to_string(&b.episodes).unwrap()
        );
    }

    #[test]
    fn paired_episode_sets_across_sources_and_methods() {
        let spec = tiny_spec(&["oracle", "blur_5"], &["gvpwm", "unipi"], 2);
        let master = RngStream::new(spec.seed);
        let episodes_stream = master.fork(labels::EPISODES).fork(25);
        // all cells derive their setups from the same generator calls
        let e0 = generate_episode(&spec.env, 25, 0, &episodes_stream).unwrap();
        let e0_again = generate_episode(&spec.env, 25, 0, &episodes_stream).unwrap();
        assert_eq!(e0.s0, e0_again.s0);
    }
}
