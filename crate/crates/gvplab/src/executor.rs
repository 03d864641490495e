//! Receding-horizon execution: re-solve guidance-grounded collocation from
//! the current observation, optionally refine the action sequence by local
//! sampling, execute, repeat.
//!
//! The plan has a fixed final time: each replan solves the remaining horizon
//! `t..T` rather than a sliding window, so the terminal goal stays pinned.
//! Primal variables warm-start across replans (executed entries drop out);
//! dual variables reset every replan.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::collocation::{alm_solve, DecisionVars, GroundingProblem, SolverConfig};
use crate::envs::{env_observe, env_step, env_success, EnvSpec, EnvState, Goal};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{Action, LatentState};
use crate::videoplan::{encode_plan, VideoPlan};
use crate::worldmodel::{History, LatentDynamics, WorldModel};

/// Execution parameters. Defaults: replan every step, refine with 500
/// samples of variance 0.3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Execution horizon: actions executed per replan.
    pub k: usize,
    pub refine: bool,
    pub refine_samples: usize,
    /// Per-component standard deviation of refinement noise.
    pub refine_std: f64,
    /// Solve once and execute everything (equivalent to `k = T`).
    pub open_loop: bool,
    /// Ablation: initialize latent knots from random arena observations
    /// instead of the guidance plan.
    pub random_z_init: bool,
    /// Anchor each replan's current latent to the encoded real observation.
    /// Disabling this (the no-collocation ablation) keeps the solver's
    /// current latent at the guidance plan's frame, so execution never sees
    /// reality and degenerates to open-loop plan inversion.
    pub pin_current: bool,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            k: 1,
            refine: true,
            refine_samples: 500,
            refine_std: 0.3_f64.sqrt(),
            open_loop: false,
            random_z_init: false,
            pin_current: true,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("execution horizon must be >= 1".into()));
        }
        if self.refine_std < 0.0 {
            return Err(Error::InvalidConfig("refinement std must be >= 0".into()));
        }
        Ok(())
    }
}

/// One row of per-replan diagnostics; optional fields do not apply to every
/// method (baselines have no penalty state).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplanDiag {
    pub t: usize,
    pub rho_final: Option<f64>,
    pub max_residual: Option<f64>,
    pub cost: f64,
    pub action_norm: f64,
}

/// Outcome of one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub final_distance: f64,
    pub steps: usize,
    pub replans: Vec<ReplanDiag>,
    pub wall_seconds: f64,
    pub aborted: bool,
    /// Actions actually executed, in order; replaying them through the
    /// environment reproduces the episode.
    pub executed_actions: Vec<Action>,
}

impl EpisodeResult {
    /// Max dynamics residual of the last solve, when the method has one.
    pub fn final_solve_residual(&self) -> Option<f64> {
        self.replans.last().and_then(|r| r.max_residual)
    }
}

/// Evaluate the unperturbed sequence plus `samples` Gaussian perturbations
/// (componentwise std `std`, clipped to bounds) by open-loop rollout, and
/// return the sequence with the lowest terminal goal cost. The unperturbed
/// sequence is always a candidate, so the model-predicted terminal cost
/// never worsens.
pub fn refine_actions(
    dynamics: &LatentDynamics,
    history: &History,
    base: &[Action],
    goal: &LatentState,
    samples: usize,
    std: f64,
    bounds: &crate::types::ActionBounds,
    stream: &RngStream,
) -> Result<Vec<Action>> {
    let score = |actions: &[Action]| -> Result<f64> {
        let rolled = dynamics.rollout(&history.latents, &history.actions, actions)?;
        crate::collocation::goal_loss(rolled.last().expect("nonempty rollout"), goal)
    };
    let mut best = base.to_vec();
    let mut best_score = score(&best)?;
    if samples == 0 || std == 0.0 {
        return Ok(best);
    }
    let mut rng = stream.rng();
    for _ in 0..samples {
        let candidate: Vec<Action> = base
            .iter()
            .map(|a| {
                let noisy = DVector::from_fn(a.dim(), |i, _| {
                    a.0[i] + std * rng.sample::<f64, _>(StandardNormal)
                });
                Action(bounds.clip(&noisy))
            })
            .collect();
        let s = score(&candidate)?;
        if s < best_score {
            best_score = s;
            best = candidate;
        }
    }
    Ok(best)
}

/// Run one guidance-grounded MPC episode.
///
/// The plan must already be aligned to horizon `T` (`T + 1` frames). Solver
/// aborts are recorded as failed episodes with the `aborted` flag, never as
/// errors; errors are reserved for malformed setups.
pub fn mpc_run(
    spec: &EnvSpec,
    s0: &EnvState,
    goal: &Goal,
    plan: &VideoPlan,
    model: &WorldModel,
    solver_cfg: &SolverConfig,
    mpc_cfg: &MpcConfig,
    stream: &RngStream,
) -> Result<EpisodeResult> {
    mpc_cfg.validate()?;
    solver_cfg.validate()?;
    let start = Instant::now();
    let horizon = plan.horizon();
    if horizon < 1 {
        return Err(Error::InvalidConfig("plan needs at least one step".into()));
    }
    let latent_plan = encode_plan(&model.encoder, plan)?;
    let z_goal = latent_plan.latents[horizon].clone();
    let h = model.dynamics.history();
    let m = spec.action_dim();
    let k_exec = if mpc_cfg.open_loop { horizon } else { mpc_cfg.k.min(horizon) };

    // primal storage over the full horizon; slices of it warm-start replans
    let mut warm_z: Vec<LatentState> = if mpc_cfg.random_z_init {
        let mut rng = stream.fork(u64::MAX).rng();
        (0..horizon)
            .map(|_| {
                let obs = crate::types::Observation(DVector::from_fn(spec.obs_dim(), |_, _| {
                    rng.gen::<f64>()
                }));
                model.encode(&obs)
            })
            .collect()
    } else {
        latent_plan.latents[1..].to_vec()
    };
    let mut warm_u: Vec<DVector<f64>> = vec![DVector::zeros(m); horizon];

    let mut state = *s0;
    let mut history = History::seeded(model.encode(&env_observe(&state)), h, m);
    let mut replans = Vec::new();
    let mut executed = Vec::with_capacity(horizon);
    let mut aborted = false;
    let mut steps = 0usize;

    let mut t = 0usize;
    while t < horizon {
        if mpc_cfg.pin_current {
            history.pin_current(model.encode(&env_observe(&state)));
        } else {
            history.pin_current(latent_plan.latents[t].clone());
        }
        let guidance = latent_plan.latents[t + 1..=horizon].to_vec();
        let problem = match GroundingProblem::new(
            &model.dynamics,
            spec.bounds.clone(),
            history.clone(),
            guidance,
            z_goal.clone(),
            solver_cfg,
        ) {
            Ok(p) => p,
            Err(_) => {
                aborted = true;
                break;
            }
        };
        let init = DecisionVars {
            latents: warm_z[t..].to_vec(),
            pre_actions: warm_u[t..].to_vec(),
        };
        let solved = match alm_solve(&problem, init, solver_cfg) {
            Ok(s) if !s.diagnostics.aborted => s,
            _ => {
                aborted = true;
                break;
            }
        };
        warm_z[t..].clone_from_slice(&solved.vars.latents);
        warm_u[t..].clone_from_slice(&solved.vars.pre_actions);

        let actions = if mpc_cfg.refine && mpc_cfg.refine_samples > 0 {
            refine_actions(
                &model.dynamics,
                &history,
                &solved.actions,
                &z_goal,
                mpc_cfg.refine_samples,
                mpc_cfg.refine_std,
                &spec.bounds,
                &stream.fork(t as u64),
            )?
        } else {
            solved.actions.clone()
        };

        let k_here = k_exec.min(horizon - t);
        let mut exec_norm = 0.0;
        for action in actions.iter().take(k_here) {
            state = env_step(spec, &state, action);
            history.advance(model.encode(&env_observe(&state)), action.clone());
            exec_norm += action.0.norm();
            executed.push(action.clone());
            steps += 1;
        }
        replans.push(ReplanDiag {
            t,
            rho_final: solved.diagnostics.outer.last().map(|o| o.rho),
            max_residual: Some(solved.diagnostics.final_max_residual),
            cost: solved.diagnostics.final_cost,
            action_norm: exec_norm / k_here as f64,
        });
        t += k_here;
    }

    let (success, final_distance) = env_success(spec, &state, goal);
    Ok(EpisodeResult {
        success: success && !aborted,
        final_distance,
        steps,
        replans,
        wall_seconds: start.elapsed().as_secs_f64(),
        aborted,
        executed_actions: executed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Observation;
    use crate::videoplan::{corrupt_teleport, make_oracle_plan};
    use crate::worldmodel::Encoder;
    use nalgebra::Vector2;

    fn fixture() -> (EnvSpec, WorldModel, EnvState, Goal) {
        let spec = EnvSpec::wallnav();
        let stream = RngStream::new(42).fork(7);
        let model = WorldModel::analytic_default(&spec, &stream).unwrap();
        let s0 = EnvState {
            agent: Vector2::new(0.2, 0.3),
            block: None,
        };
        let goal = Goal {
            target: Observation::from_slice(&[0.85, 0.75]),
        };
        (spec, model, s0, goal)
    }

    #[test]
    fn refinement_never_worsens_model_cost() {
        let (spec, model, s0, goal) = fixture();
        let plan = make_oracle_plan(&spec, &s0, &goal, 25).unwrap();
        let z0 = model.encode(&plan.frames[0]);
        let z_g = model.encode(&plan.frames[25]);
        let hist = History::seeded(z0, 1, 2);
        let stream = RngStream::new(5);
        let mut rng = stream.rng();
        for trial in 0..100 {
            let base: Vec<Action> = (0..6)
                .map(|_| {
                    Action::from_slice(&[rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)])
                })
                .collect();
            let score = |a: &[Action]| {
                let rolled = model
                    .dynamics
                    .rollout(&hist.latents, &hist.actions, a)
                    .unwrap();
                crate::collocation::goal_loss(rolled.last().unwrap(), &z_g).unwrap()
            };
            let refined = refine_actions(
                &model.dynamics,
                &hist,
                &base,
                &z_g,
                20,
                0.05,
                &spec.bounds,
                &stream.fork(trial),
            )
            .unwrap();
            assert!(score(&refined) <= score(&base) + 1e-15);
        }
    }

    #[test]
    fn refinement_noop_cases() {
        let (spec, model, s0, _) = fixture();
        let z0 = model.encode(&env_observe(&s0));
        let hist = History::seeded(z0.clone(), 1, 2);
        let base = vec![Action::from_slice(&[0.05, 0.0]); 4];
        let stream = RngStream::new(9);
        let same_c0 =
            refine_actions(&model.dynamics, &hist, &base, &z0, 0, 0.1, &spec.bounds, &stream)
                .unwrap();
        assert_eq!(same_c0, base);
        let same_s0 =
            refine_actions(&model.dynamics, &hist, &base, &z0, 50, 0.0, &spec.bounds, &stream)
                .unwrap();
        assert_eq!(same_s0, base);
    }

    #[test]
    fn oracle_plan_episode_succeeds() {
        let (spec, model, s0, goal) = fixture();
        let plan = make_oracle_plan(&spec, &s0, &goal, 25).unwrap();
        let result = mpc_run(
            &spec,
            &s0,
            &goal,
            &plan,
            &model,
            &SolverConfig::default(),
            &MpcConfig::default(),
            &RngStream::new(1),
        )
        .unwrap();
        assert!(result.success, "distance {}", result.final_distance);
        assert_eq!(result.steps, 25);
        assert_eq!(result.replans.len(), 25);
        // residual gate on the final (single-step) solve
        assert!(result.final_solve_residual().unwrap() <= 1e-3);
    }

    #[test]
    fn open_loop_solves_exactly_once() {
        let (spec, model, s0, goal) = fixture();
        let plan = make_oracle_plan(&spec, &s0, &goal, 25).unwrap();
        let cfg = MpcConfig {
            open_loop: true,
            ..Default::default()
        };
        let result = mpc_run(
            &spec,
            &s0,
            &goal,
            &plan,
            &model,
            &SolverConfig::default(),
            &cfg,
            &RngStream::new(1),
        )
        .unwrap();
        assert_eq!(result.replans.len(), 1);
        assert_eq!(result.steps, 25);
    }

    #[test]
    fn teleport_plan_is_grounded_and_succeeds() {
        let (spec, model, s0, goal) = fixture();
        let plan = make_oracle_plan(&spec, &s0, &goal, 25).unwrap();
        let cut = corrupt_teleport(&plan, 2, 8).unwrap();
        let result = mpc_run(
            &spec,
            &s0,
            &goal,
            &cut,
            &model,
            &SolverConfig::default(),
            &MpcConfig::default(),
            &RngStream::new(1),
        )
        .unwrap();
        assert!(result.success, "distance {}", result.final_distance);
    }

    #[test]
    fn determinism_per_seed() {
        let (spec, model, s0, goal) = fixture();
        let plan = make_oracle_plan(&spec, &s0, &goal, 25).unwrap();
        let run = |seed| {
            mpc_run(
                &spec,
                &s0,
                &goal,
                &plan,
                &model,
                &SolverConfig::default(),
                &MpcConfig::default(),
                &RngStream::new(seed),
            )
            .unwrap()
        };
        let a = run(3);
        let b = run(3);
        assert_eq!(a.success, b.success);
        assert_eq!(a.final_distance, b.final_distance);
        assert_eq!(
            serde_json::to_string(&a.replans).unwrap(),
            serde_json::to_string(&b.replans).unwrap()
        );
    }

    #[test]
    fn aborts_record_failure() {
        let (spec, model, s0, goal) = fixture();
        let mut plan = make_oracle_plan(&spec, &s0, &goal, 10).unwrap();
        plan.frames[3].0[0] = f64::NAN;
        let result = mpc_run(
            &spec,
            &s0,
            &goal,
            &plan,
            &model,
            &SolverConfig::default(),
            &MpcConfig::default(),
            &RngStream::new(1),
        )
        .unwrap();
        assert!(result.aborted);
        assert!(!result.success);
    }

    #[test]
    fn identity_encoder_episode() {
        // smallest possible setup: identity encoder, straight-line task
        let spec = EnvSpec::wallnav();
        let encoder = Encoder::identity(2);
        let model = WorldModel {
            encoder: encoder.clone(),
            dynamics: LatentDynamics::analytic(spec.clone(), encoder, 200.0),
        };
        let s0 = EnvState {
            agent: Vector2::new(0.2, 0.2),
            block: None,
        };
        let goal = Goal {
            target: Observation::from_slice(&[0.2, 0.7]),
        };
        let plan = make_oracle_plan(&spec, &s0, &goal, 12).unwrap();
        let result = mpc_run(
            &spec,
            &s0,
            &goal,
            &plan,
            &model,
            &SolverConfig::default(),
            &MpcConfig::default(),
            &RngStream::new(2),
        )
        .unwrap();
        assert!(result.success);
    }
}
