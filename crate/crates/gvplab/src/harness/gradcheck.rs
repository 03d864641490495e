//! Orchestrated gradient verification: model Jacobians and solver gradients
//! against central finite differences.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::collocation::{
    AlignmentMetric, DualState, GroundingProblem, SolverConfig,
};
use crate::envs::EnvSpec;
use crate::error::Result;
use crate::rng::RngStream;
use crate::types::{Action, LatentState};
use crate::worldmodel::{
    gradient_check, Encoder, GradCheckReport, History, LatentDynamics, Mlp, WorldModel,
};

#[derive(Debug, Clone, Serialize)]
pub struct GradSuiteReport {
    pub dynamics_wallnav: GradCheckReport,
    pub dynamics_pushtoy: GradCheckReport,
    pub dynamics_mlp: GradCheckReport,
    pub alm_points: usize,
    pub alm_max_rel_err: f64,
    pub alm_pass: bool,
    pub pass: bool,
}

/// Run the whole suite: analytic dynamics Jacobians at 1e-4, MLP Jacobians
/// at 1e-3, and solver gradients at 1e-4, each over at least 50 points.
pub fn run_gradcheck(seed: u64) -> Result<GradSuiteReport> {
    let stream = RngStream::new(seed);

    let wall_model =
        WorldModel::analytic_default(&EnvSpec::wallnav(), &stream.fork(1))?;
    let dynamics_wallnav = gradient_check(&wall_model.dynamics, 50, 1e-4, &stream.fork(2))?;

    let push_model =
        WorldModel::analytic_default(&EnvSpec::pushtoy(), &stream.fork(3))?;
    let dynamics_pushtoy = gradient_check(&push_model.dynamics, 50, 1e-4, &stream.fork(4))?;

    let mut rng = stream.fork(5).rng();
    let mlp_dynamics = LatentDynamics::LearnedMlp {
        mlp: Mlp::random(3 * (4 + 2), 32, 4, &mut rng),
        latent_dim: 4,
        action_dim: 2,
        history: 3,
    };
    let dynamics_mlp = gradient_check(&mlp_dynamics, 50, 1e-3, &stream.fork(6))?;

    let (alm_points, alm_max_rel_err) = alm_gradient_sweep(&stream.fork(7))?;
    let alm_pass = alm_max_rel_err <= 1e-4;

    let pass = dynamics_wallnav.pass && dynamics_pushtoy.pass && dynamics_mlp.pass && alm_pass;
    Ok(GradSuiteReport {
        dynamics_wallnav,
        dynamics_pushtoy,
        dynamics_mlp,
        alm_points,
        alm_max_rel_err,
        alm_pass,
        pass,
    })
}

/// Compare solver gradients against finite differences on randomized
/// grounding instances (both metrics, identity and random encoders).
fn alm_gradient_sweep(stream: &RngStream) -> Result<(usize, f64)> {
    let spec = EnvSpec::wallnav();
    let mut max_rel = 0.0f64;
    let points = 50;
    for p in 0..points {
        let inst = stream.fork(p as u64);
        let mut rng = inst.rng();
        let encoder = if p % 2 == 0 {
            Encoder::identity(2)
        } else {
            Encoder::random_orthonormal(8, 2, &inst.fork(1))?
        };
        let dynamics = LatentDynamics::analytic(spec.clone(), encoder.clone(), 200.0);
        let r_len = 3 + p % 3;
        let metric = if p % 3 == 0 {
            AlignmentMetric::Mse
        } else {
            AlignmentMetric::Cosine
        };
        let cfg = SolverConfig {
            metric,
            ..Default::default()
        };

        let obs0 = DVector::from_fn(2, |_, _| rng.gen_range(0.2..0.8));
        let pinned = LatentState(encoder.encode_vec(&obs0));
        let guidance: Vec<LatentState> = (0..r_len)
            .map(|_| {
                LatentState(encoder.encode_vec(&DVector::from_fn(2, |_, _| {
                    rng.gen_range(0.1..0.9)
                })))
            })
            .collect();
        let goal = guidance.last().unwrap().clone();
        let problem = GroundingProblem::new(
            &dynamics,
            spec.bounds.clone(),
            History::seeded(pinned, 1, 2),
            guidance,
            goal,
            &cfg,
        )?;
        let mut vars = problem.init_from_guidance();
        for z in vars.latents.iter_mut() {
            z.0.apply(|v| *v += rng.gen_range(-0.05..0.05));
        }
        for u in vars.pre_actions.iter_mut() {
            u.apply(|v| *v = rng.gen_range(-1.5..1.5));
        }
        let d = dynamics.latent_dim();
        let dual = DualState::with_multipliers(
            (0..r_len)
                .map(|_| DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0)))
                .collect(),
            rng.gen_range(0.5..20.0),
        );

        let (gz, gu, _) = problem.gradients(&vars, &dual)?;
        let (fz, fu) = problem.finite_diff_gradients(&vars, &dual, 1e-6)?;
        for (a, f) in gz.iter().zip(fz.iter()).chain(gu.iter().zip(fu.iter())) {
            for k in 0..a.len() {
                let rel = (a[k] - f[k]).abs() / a[k].abs().max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
        // exercise the shooting-gradient path on the same instance
        let actions: Vec<Action> = (0..r_len)
            .map(|_| Action::from_slice(&[rng.gen_range(-0.09..0.09), rng.gen_range(-0.09..0.09)]))
            .collect();
        let hist = History::seeded(LatentState(encoder.encode_vec(&obs0)), 1, 2);
        let grad = crate::baselines::terminal_cost_grad(
            &dynamics,
            &hist,
            &actions,
            &problem.goal,
            d,
        )?;
        let h = 1e-6;
        for t in 0..r_len {
            for i in 0..2 {
                let mut ap = actions.clone();
                let mut am = actions.clone();
                ap[t].0[i] += h;
                am[t].0[i] -= h;
                let score = |acts: &[Action]| -> Result<f64> {
                    let rolled = dynamics.rollout(&hist.latents, &hist.actions, acts)?;
                    crate::collocation::goal_loss(rolled.last().unwrap(), &problem.goal)
                };
                let fd = (score(&ap)? - score(&am)?) / (2.0 * h);
                let rel = (grad[t][i] - fd).abs() / grad[t][i].abs().max(1.0);
                max_rel = max_rel.max(rel);
            }
        }
    }
    Ok((points, max_rel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_default_seed() {
        let report = run_gradcheck(7).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.dynamics_wallnav.max_rel_err <= 1e-4);
        assert!(report.alm_max_rel_err <= 1e-4);
    }
}
