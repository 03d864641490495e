//! Direct KKT reference for equality-constrained linear-quadratic grounding
//! instances.
//!
//! In open space the analytic dynamics reduce to the linear map
//! `z' = E E^T z + E a` (soft clamp and wall gates are inactive to ~1e-18),
//! so the MSE-metric grounding problem is an equality-constrained quadratic
//! program with a unique KKT point. This module builds and solves that KKT
//! system directly with a dense LU factorization, a route that shares no
//! code with the iterative solver it checks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::collocation::{alm_solve, AlignmentMetric, GroundingProblem, SolverConfig};
use crate::envs::{EnvKind, EnvSpec};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::types::{LatentState, WeightConfig};
use crate::worldmodel::{Encoder, History, LatentDynamics};

/// One randomized LQ instance.
struct LqInstance {
    encoder: Encoder,
    spec: EnvSpec,
    pinned: LatentState,
    guidance: Vec<LatentState>,
    goal: LatentState,
    weights: WeightConfig,
}

/// Solution of the KKT system: optimal latents and actions.
struct KktSolution {
    latents: Vec<DVector<f64>>,
    actions: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LqOracleReport {
    pub instances: usize,
    pub max_abs_dev: f64,
    pub per_instance: Vec<f64>,
    pub pass: bool,
}

fn free_space_spec() -> EnvSpec {
    let mut spec = EnvSpec::wallnav();
    if let EnvKind::WallNav { ref mut wall } = spec.kind {
        wall.x_pos = 10.0;
    }
    spec
}

fn sample_instance(index: u64, stream: &RngStream) -> Result<LqInstance> {
    let inst_stream = stream.fork(index);
    let mut rng = inst_stream.rng();
    let spec = free_space_spec();
    let n = spec.obs_dim();
    let encoder = if index % 2 == 0 {
        Encoder::identity(n)
    } else {
        Encoder::random_orthonormal(6 + (index % 3) as usize, n, &inst_stream.fork(1))?
    };
    let horizon = 3 + (index % 3) as usize;
    let obs0 = DVector::from_fn(n, |_, _| rng.gen_range(0.35..0.65));
    let goal_obs = obs0.map(|v: f64| (v + rng.gen_range(-0.12..0.12)).clamp(0.25, 0.75));
    // guidance: a jittered interpolation from start to goal
    let mut guidance = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let alpha = (j + 1) as f64 / horizon as f64;
        let cur = (&obs0 * (1.0 - alpha) + &goal_obs * alpha)
            .map(|v| v + rng.gen_range(-0.02..0.02));
        guidance.push(LatentState(encoder.encode_vec(&cur)));
    }
    let weights = WeightConfig {
        lambda_v: [0.0, 0.7, 1.0][(index % 3) as usize],
        lambda_g: 10.0,
        lambda_r: [0.05, 0.1][(index % 2) as usize],
    };
    Ok(LqInstance {
        pinned: LatentState(encoder.encode_vec(&obs0)),
        goal: LatentState(encoder.encode_vec(&goal_obs)),
        encoder,
        spec,
        guidance,
        weights,
    })
}

/// Solve the equality-constrained quadratic program directly.
fn solve_kkt(inst: &LqInstance) -> Result<KktSolution> {
    let e = inst.encoder.matrix();
    let d = inst.encoder.latent_dim();
    let m = inst.spec.action_dim();
    let r = inst.guidance.len();
    let a_mat = e * e.transpose();
    let b_mat = e.clone();
    let lv = inst.weights.lambda_v;
    let lg = inst.weights.lambda_g;
    let lr = inst.weights.lambda_r;

    let nz = r * d;
    let na = r * m;
    let nv = r * d;
    let size = nz + na + nv;
    let mut mat = DMatrix::<f64>::zeros(size, size);
    let mut rhs = DVector::<f64>::zeros(size);

    let zi = |j: usize| j * d;
    let ai = |j: usize| nz + j * m;
    let vi = |j: usize| nz + na + j * d;

    // stationarity in z_j
    for j in 0..r {
        let row = zi(j);
        let (weight, target) = if j + 1 == r {
            (2.0 * lg / d as f64, &inst.goal.0)
        } else {
            (2.0 * lv / d as f64, &inst.guidance[j].0)
        };
        for i in 0..d {
            mat[(row + i, zi(j) + i)] += weight;
            rhs[row + i] += weight * target[i];
            mat[(row + i, vi(j) + i)] += 1.0;
        }
        if j + 1 < r {
            // -A^T nu_{j+1}
            for i in 0..d {
                for k in 0..d {
                    mat[(row + i, vi(j + 1) + k)] -= a_mat[(k, i)];
                }
            }
        }
    }
    // stationarity in a_j
    for j in 0..r {
        let row = ai(j);
        for i in 0..m {
            mat[(row + i, ai(j) + i)] += 2.0 * lr;
            for k in 0..d {
                mat[(row + i, vi(j) + k)] -= b_mat[(k, i)];
            }
        }
    }
    // constraints: z_j - A z_{j-1} - B a_j = [A z_pinned when j = 0]
    for j in 0..r {
        let row = vi(j);
        for i in 0..d {
            mat[(row + i, zi(j) + i)] += 1.0;
            for k in 0..m {
                mat[(row + i, ai(j) + k)] -= b_mat[(i, k)];
            }
        }
        if j == 0 {
            let lead = &a_mat * &inst.pinned.0;
            for i in 0..d {
                rhs[row + i] += lead[i];
            }
        } else {
            for i in 0..d {
                for k in 0..d {
                    mat[(row + i, zi(j - 1) + k)] -= a_mat[(i, k)];
                }
            }
        }
    }

    let solution = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SolverAbort("singular KKT system".into()))?;
    let latents = (0..r)
        .map(|j| solution.rows(zi(j), d).into_owned())
        .collect();
    let actions = (0..r)
        .map(|j| solution.rows(ai(j), m).into_owned())
        .collect();
    Ok(KktSolution { latents, actions })
}

/// Run the oracle: on each randomized instance, the iterative solver must
/// match the direct KKT solution within `tol` in every variable.
pub fn run_lq_oracle(instances: usize, tol: f64, stream: &RngStream) -> Result<LqOracleReport> {
    let mut per_instance = Vec::with_capacity(instances);
    let mut max_dev = 0.0f64;
    let mut index = 0u64;
    while per_instance.len() < instances {
        let inst = sample_instance(index, stream)?;
        index += 1;
        let kkt = solve_kkt(&inst)?;
        // keep instances whose optimum is strictly inside the action box;
        // boundary-active optima are outside the equality-only KKT model
        if kkt
            .actions
            .iter()
            .any(|a| a.amax() > 0.9 * inst.spec.bounds.max.amax())
        {
            continue;
        }

        // correctness check, not a budget check: give the solver enough
        // iterations that the only way to miss the KKT point is a wrong
        // gradient or update rule
        let cfg = SolverConfig {
            weights: inst.weights,
            metric: AlignmentMetric::Mse,
            outer_iters: 40,
            inner_iters: 60,
            rho_max: 50.0,
            lr_decay: 0.9,
            ..Default::default()
        };
        let dynamics =
            LatentDynamics::analytic(inst.spec.clone(), inst.encoder.clone(), 200.0);
        let problem = GroundingProblem::new(
            &dynamics,
            inst.spec.bounds.clone(),
            History::seeded(inst.pinned.clone(), 1, inst.spec.action_dim()),
            inst.guidance.clone(),
            inst.goal.clone(),
            &cfg,
        )?;
        let solved = alm_solve(&problem, problem.init_from_guidance(), &cfg)?;
        if solved.diagnostics.aborted {
            return Err(Error::SolverAbort("LQ instance aborted".into()));
        }

        let mut dev = 0.0f64;
        for (z, z_ref) in solved.vars.latents.iter().zip(kkt.latents.iter()) {
            dev = dev.max((&z.0 - z_ref).amax());
        }
        for (a, a_ref) in solved.actions.iter().zip(kkt.actions.iter()) {
            dev = dev.max((&a.0 - a_ref).amax());
        }
        per_instance.push(dev);
        max_dev = max_dev.max(dev);
    }
    Ok(LqOracleReport {
        instances,
        max_abs_dev: max_dev,
        pass: max_dev <= tol,
        per_instance,
    })
}
