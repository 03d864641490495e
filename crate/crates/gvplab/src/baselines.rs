//! Comparison planners sharing the world model: cross-entropy shooting,
//! gradient shooting through the latent dynamics, and direct inverse-dynamics
//! execution of a guidance plan.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::collocation::{goal_loss, reparam_action, reparam_jacobian_diag};
use crate::envs::{env_observe, env_step, env_success, EnvSpec, EnvState, Goal};
use crate::error::{Error, Result};
use crate::executor::{EpisodeResult, ReplanDiag};
use crate::opt::{Adam, AdamParams};
use crate::rng::RngStream;
use crate::types::{Action, ActionBounds, LatentState, Observation};
use crate::worldmodel::{History, LatentDynamics, WorldModel};

/// Cross-entropy method parameters. The reference configuration keeps the
/// baseline competitive at this scale; the underlying method leaves them
/// unspecified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Initial sampling std as a fraction of the per-component action bound.
    pub init_std_scale: f64,
    pub std_floor: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 300,
            elites: 30,
            iterations: 10,
            init_std_scale: 0.5,
            std_floor: 0.01,
        }
    }
}

impl CemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elites < 1 || self.elites > self.population {
            return Err(Error::InvalidConfig(
                "need 1 <= elites <= population".into(),
            ));
        }
        if self.init_std_scale <= 0.0 || self.std_floor <= 0.0 {
            return Err(Error::InvalidConfig("stds must be positive".into()));
        }
        Ok(())
    }
}

/// Gradient-shooting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    pub iterations: usize,
    pub adam: AdamParams,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            iterations: 150,
            adam: AdamParams::with_lr(0.02),
        }
    }
}

fn terminal_cost(
    dynamics: &LatentDynamics,
    history: &History,
    actions: &[Action],
    goal: &LatentState,
) -> Result<f64> {
    let rolled = dynamics.rollout(&history.latents, &history.actions, actions)?;
    goal_loss(rolled.last().expect("nonempty rollout"), goal)
}

/// Cross-entropy shooting over bounded action sequences.
///
/// Samples from a diagonal Gaussian clipped to bounds, scores by terminal
/// goal loss under open-loop rollouts, refits to elites, and keeps the best
/// sequence seen anywhere. The distribution mean itself (initially all
/// zeros) is evaluated in every iteration.
pub fn cem_plan(
    dynamics: &LatentDynamics,
    history: &History,
    goal: &LatentState,
    horizon: usize,
    cfg: &CemConfig,
    bounds: &ActionBounds,
    stream: &RngStream,
) -> Result<Vec<Action>> {
    cfg.validate()?;
    if horizon < 1 {
        return Err(Error::InvalidConfig("horizon must be >= 1".into()));
    }
    let m = bounds.dim();
    let mut rng = stream.rng();
    let mut mean: Vec<DVector<f64>> = vec![DVector::zeros(m); horizon];
    let mut std: Vec<DVector<f64>> = vec![bounds.max.map(|v| v.abs() * cfg.init_std_scale); horizon];

    let mut best: Option<(f64, Vec<Action>)> = None;
    for _ in 0..cfg.iterations {
        let mut scored: Vec<(f64, Vec<Action>)> = Vec::with_capacity(cfg.population);
        for cand_idx in 0..cfg.population {
            let candidate: Vec<Action> = (0..horizon)
                .map(|t| {
                    let raw = if cand_idx == 0 {
                        mean[t].clone()
                    } else {
                        DVector::from_fn(m, |i, _| {
                            mean[t][i] + std[t][i] * rng.sample::<f64, _>(StandardNormal)
                        })
                    };
                    Action(bounds.clip(&raw))
                })
                .collect();
            let score = terminal_cost(dynamics, history, &candidate, goal)?;
            scored.push((score, candidate));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        if best.as_ref().is_none_or(|(b, _)| scored[0].0 < *b) {
            best = Some((scored[0].0, scored[0].1.clone()));
        }
        let elites = &scored[..cfg.elites];
        for t in 0..horizon {
            let mut mu = DVector::zeros(m);
            for (_, seq) in elites {
                mu += &seq[t].0;
            }
            mu /= cfg.elites as f64;
            let mut var = DVector::zeros(m);
            for (_, seq) in elites {
                let d = &seq[t].0 - &mu;
                var += d.component_mul(&d);
            }
            var /= cfg.elites as f64;
            mean[t] = mu;
            std[t] = var.map(|v| v.sqrt().max(cfg.std_floor));
        }
    }
    Ok(best.expect("at least one iteration").1)
}

/// Gradient shooting: optimize tanh pre-images of an action sequence by Adam
/// on the terminal goal loss, backpropagating through the rollout with the
/// model's exact vector-Jacobian products. Returns the best iterate seen
/// (arena clamping saturates gradients, so later iterates can be worse than
/// earlier ones). Zero iterations return the initial (mid-box, i.e. zero)
/// actions.
pub fn gd_plan(
    dynamics: &LatentDynamics,
    history: &History,
    goal: &LatentState,
    horizon: usize,
    cfg: &GdConfig,
    bounds: &ActionBounds,
) -> Result<Vec<Action>> {
    if horizon < 1 {
        return Err(Error::InvalidConfig("horizon must be >= 1".into()));
    }
    let m = bounds.dim();
    let d = dynamics.latent_dim();
    let mut pre: Vec<DVector<f64>> = vec![DVector::zeros(m); horizon];
    let mut adam = Adam::new(horizon * m, cfg.adam);
    let mut flat = DVector::zeros(horizon * m);
    let mut best: Vec<Action> = pre.iter().map(|u| reparam_action(u, bounds)).collect();
    let mut best_score = terminal_cost(dynamics, history, &best, goal)?;

    for _ in 0..cfg.iterations {
        let actions: Vec<Action> = pre.iter().map(|u| reparam_action(u, bounds)).collect();
        let score = terminal_cost(dynamics, history, &actions, goal)?;
        if !score.is_finite() {
            return Err(Error::SolverAbort("non-finite shooting loss".into()));
        }
        if score < best_score {
            best_score = score;
            best = actions.clone();
        }
        let grad_a = terminal_cost_grad(dynamics, history, &actions, goal, d)?;
        let mut grad_flat = DVector::zeros(horizon * m);
        for (t, (u, ga)) in pre.iter().zip(grad_a.iter()).enumerate() {
            let gu = ga.component_mul(&reparam_jacobian_diag(u, bounds));
            grad_flat.rows_mut(t * m, m).copy_from(&gu);
        }
        if !grad_flat.iter().all(|v| v.is_finite()) {
            return Err(Error::SolverAbort("non-finite shooting gradient".into()));
        }
        for (t, u) in pre.iter().enumerate() {
            flat.rows_mut(t * m, m).copy_from(u);
        }
        adam.step(&mut flat, &grad_flat);
        for (t, u) in pre.iter_mut().enumerate() {
            u.copy_from(&flat.rows(t * m, m));
        }
    }
    let last: Vec<Action> = pre.iter().map(|u| reparam_action(u, bounds)).collect();
    if terminal_cost(dynamics, history, &last, goal)? < best_score {
        best = last;
    }
    Ok(best)
}

/// Gradient of the terminal goal loss with respect to each action, via a
/// backward sweep of vector-Jacobian products along the rollout.
pub fn terminal_cost_grad(
    dynamics: &LatentDynamics,
    history: &History,
    actions: &[Action],
    goal: &LatentState,
    latent_dim: usize,
) -> Result<Vec<DVector<f64>>> {
    let h = dynamics.history();
    let horizon = actions.len();
    let mut lat = history.latents.clone();
    let mut act = history.actions.clone();
    for (t, a) in actions.iter().enumerate() {
        act.push(a.clone());
        let z = dynamics.latent_step(&lat[t..t + h], &act[t..t + h])?;
        lat.push(z);
    }
    // adjoint of every latent in `lat`; only the terminal one has direct cost
    let mut adj: Vec<DVector<f64>> = vec![DVector::zeros(latent_dim); lat.len()];
    let z_t = &lat[lat.len() - 1];
    *adj.last_mut().unwrap() = (&z_t.0 - &goal.0) * (2.0 / latent_dim as f64);

    let mut grad_a: Vec<DVector<f64>> =
        vec![DVector::zeros(actions[0].dim()); horizon];
    for t in (0..horizon).rev() {
        let w = adj[t + h].clone();
        if w.amax() == 0.0 {
            continue;
        }
        let (gz, ga) = dynamics.latent_step_vjp(&lat[t..t + h], &act[t..t + h], &w)?;
        for (slot, g) in gz.into_iter().enumerate() {
            adj[t + slot] += &g;
        }
        for (slot, g) in ga.into_iter().enumerate() {
            // action window index t + slot maps to decision index t + slot - (h - 1)
            let j = t as isize + slot as isize - (h as isize - 1);
            if j >= 0 {
                grad_a[j as usize] += &g;
            }
        }
    }
    Ok(grad_a)
}

/// Exact inverse dynamics on agent coordinates: the action that would move
/// the agent between consecutive observations, clipped to bounds. Block
/// coordinates are ignored; the action controls only the agent.
pub fn inverse_dynamics(spec: &EnvSpec, o_t: &Observation, o_next: &Observation) -> Action {
    let delta = DVector::from_column_slice(&[o_next.0[0] - o_t.0[0], o_next.0[1] - o_t.0[1]]);
    Action(spec.bounds.clip(&delta))
}

/// Execute a guidance plan open loop through inverse dynamics: actions come
/// from consecutive plan frames, never from re-observation.
pub fn unipi_execute(
    spec: &EnvSpec,
    s0: &EnvState,
    goal: &Goal,
    plan: &crate::videoplan::VideoPlan,
) -> EpisodeResult {
    let start = Instant::now();
    let mut state = *s0;
    let horizon = plan.horizon();
    let mut executed = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let a = inverse_dynamics(spec, &plan.frames[t], &plan.frames[t + 1]);
        state = env_step(spec, &state, &a);
        executed.push(a);
    }
    let (success, final_distance) = env_success(spec, &state, goal);
    EpisodeResult {
        success,
        final_distance,
        steps: horizon,
        replans: Vec::new(),
        wall_seconds: start.elapsed().as_secs_f64(),
        aborted: false,
        executed_actions: executed,
    }
}

/// Which shooting baseline to run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShootingPlanner {
    Cem(CemConfig),
    Gd(GdConfig),
}

/// Receding-horizon execution of a shooting baseline (no guidance): replan
/// from the current observation every `k` steps, score by terminal goal
/// loss in latent space.
pub fn shooting_mpc_run(
    spec: &EnvSpec,
    s0: &EnvState,
    goal: &Goal,
    model: &WorldModel,
    planner: &ShootingPlanner,
    horizon: usize,
    k: usize,
    stream: &RngStream,
) -> Result<EpisodeResult> {
    if k < 1 {
        return Err(Error::InvalidConfig("execution horizon must be >= 1".into()));
    }
    let start = Instant::now();
    let z_goal = model.encode(&goal.target);
    let h = model.dynamics.history();
    let m = spec.action_dim();
    let mut state = *s0;
    let mut history = History::seeded(model.encode(&env_observe(&state)), h, m);
    let mut replans = Vec::new();
    let mut executed = Vec::with_capacity(horizon);
    let mut steps = 0usize;
    let mut aborted = false;

    let mut t = 0usize;
    while t < horizon {
        let remaining = horizon - t;
        let planned = match planner {
            ShootingPlanner::Cem(cfg) => cem_plan(
                &model.dynamics,
                &history,
                &z_goal,
                remaining,
                cfg,
                &spec.bounds,
                &stream.fork(t as u64),
            ),
            ShootingPlanner::Gd(cfg) => gd_plan(
                &model.dynamics,
                &history,
                &z_goal,
                remaining,
                cfg,
                &spec.bounds,
            ),
        };
        let actions = match planned {
            Ok(a) => a,
            Err(_) => {
                aborted = true;
                break;
            }
        };
        let cost = terminal_cost(&model.dynamics, &history, &actions, &z_goal)?;
        let k_here = k.min(remaining);
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
            rho_final: None,
            max_residual: None,
            cost,
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
