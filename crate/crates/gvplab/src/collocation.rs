//! Guidance-grounded latent collocation.
//!
//! Both the latent knots `Z = z_{t+1..T}` and the actions are decision
//! variables; model dynamics enter as equality constraints handled by an
//! augmented Lagrangian with geometric penalty continuation. The current
//! latent `z_t` is pinned to the encoded observation and never optimized, so
//! the first constraint anchors the whole trajectory to reality. Actions are
//! optimized through a tanh reparameterization that keeps them strictly
//! inside bounds (a projected variant exists for ablation).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opt::{Adam, AdamParams};
use crate::types::{l2_normalize, mse, Action, ActionBounds, LatentState, WeightConfig};
use crate::worldmodel::{History, LatentDynamics};

pub use crate::opt::Adam as AdamOptimizer;

/// Which alignment loss ties optimized latents to the guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignmentMetric {
    /// Squared distance between unit-normalized latents; scale invariant.
    Cosine,
    /// Plain mean squared error; ablation variant.
    Mse,
}

/// How bounded actions are parameterized during optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionParam {
    /// Unconstrained pre-images mapped through tanh.
    Tanh,
    /// Raw actions with componentwise projection after each step.
    ProjectedClip,
}

/// Solver configuration. Defaults are the tuned reference configuration:
/// weights (0.05, 1.0, 10.0), 25 inner and 25 outer iterations, rho growing
/// geometrically from 1 by 1.9 up to 1e4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub weights: WeightConfig,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub rho0: f64,
    pub gamma: f64,
    pub rho_max: f64,
    pub adam: AdamParams,
    /// Geometric decay of the (shared) learning rate per outer iteration;
    /// 1.0 disables it. Late outer iterations face a stiff penalty, and a
    /// constant-step Adam limit-cycles there instead of settling.
    pub lr_decay: f64,
    pub metric: AlignmentMetric,
    /// Residual tolerance used by execution-level feasibility gates.
    pub tau_dyn: f64,
    pub action_param: ActionParam,
    /// Ablation: keep latents fixed at their initialization.
    pub freeze_latents: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            weights: WeightConfig::default(),
            inner_iters: 25,
            outer_iters: 25,
            rho0: 1.0,
            gamma: 1.9,
            rho_max: 1e4,
            adam: AdamParams::default(),
            lr_decay: 0.85,
            metric: AlignmentMetric::Cosine,
            tau_dyn: 1e-3,
            action_param: ActionParam::Tanh,
            freeze_latents: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.inner_iters < 1 || self.outer_iters < 1 {
            return Err(Error::InvalidConfig("iteration counts must be >= 1".into()));
        }
        if self.adam.lr <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.rho0 <= 0.0 || self.gamma <= 1.0 || self.rho_max < self.rho0 {
            return Err(Error::InvalidConfig(
                "penalty schedule needs rho0 > 0, gamma > 1, rho_max >= rho0".into(),
            ));
        }
        if self.lr_decay <= 0.0 || self.lr_decay > 1.0 {
            return Err(Error::InvalidConfig("lr_decay must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Lagrange multipliers and penalty with its continuation schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub lambda: Vec<DVector<f64>>,
    pub rho: f64,
    pub rho0: f64,
    pub rho_max: f64,
    pub gamma: f64,
    growth_steps: i32,
}

impl DualState {
    pub fn fresh(constraints: usize, dim: usize, cfg: &SolverConfig) -> Self {
        DualState {
            lambda: vec![DVector::zeros(dim); constraints],
            rho: cfg.rho0,
            rho0: cfg.rho0,
            rho_max: cfg.rho_max,
            gamma: cfg.gamma,
            growth_steps: 0,
        }
    }

    pub fn with_multipliers(lambda: Vec<DVector<f64>>, rho: f64) -> Self {
        DualState {
            lambda,
            rho,
            rho0: rho,
            rho_max: 1e4,
            gamma: 1.9,
            growth_steps: 0,
        }
    }

    /// Dual ascent: `lambda_t += rho * r_t` componentwise.
    pub fn ascend(&mut self, residuals: &[DVector<f64>]) {
        assert_eq!(residuals.len(), self.lambda.len());
        for (l, r) in self.lambda.iter_mut().zip(residuals) {
            *l += r * self.rho;
        }
    }

    /// Geometric continuation; after `k` growth steps the penalty equals
    /// `min(gamma^k * rho0, rho_max)` exactly.
    pub fn grow_penalty(&mut self) {
        self.growth_steps += 1;
        self.rho = (self.gamma.powi(self.growth_steps) * self.rho0).min(self.rho_max);
    }
}

/// Primal variables over the remaining horizon: free latent knots
/// `z_{t+1..T}` and action pre-images `u_{t..T-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVars {
    pub latents: Vec<LatentState>,
    pub pre_actions: Vec<DVector<f64>>,
}

impl DecisionVars {
    /// Remaining horizon length.
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }
}

/// Guidance alignment: squared chord distance between unit-normalized
/// latents, `2 (1 - cos theta)`; invariant to either argument's magnitude.
pub fn video_alignment_loss(z: &LatentState, z_vid: &LatentState) -> Result<f64> {
    let a = l2_normalize(&z.0)?;
    let b = l2_normalize(&z_vid.0)?;
    Ok((a - b).norm_squared())
}

/// Terminal goal loss: mean squared error (not scale invariant).
pub fn goal_loss(z_terminal: &LatentState, z_goal: &LatentState) -> Result<f64> {
    mse(&z_terminal.0, &z_goal.0)
}

fn alignment_loss(metric: AlignmentMetric, z: &LatentState, v: &LatentState) -> Result<f64> {
    match metric {
        AlignmentMetric::Cosine => video_alignment_loss(z, v),
        AlignmentMetric::Mse => mse(&z.0, &v.0),
    }
}

fn alignment_grad(
    metric: AlignmentMetric,
    z: &LatentState,
    v: &LatentState,
) -> Result<DVector<f64>> {
    match metric {
        AlignmentMetric::Cosine => {
            let zn = z.0.norm();
            if zn <= 0.0 {
                return Err(Error::DegenerateLatent);
            }
            let zh = &z.0 / zn;
            let vh = l2_normalize(&v.0)?;
            let dot = zh.dot(&vh);
            Ok((zh * dot - vh) * (2.0 / zn))
        }
        AlignmentMetric::Mse => Ok((&z.0 - &v.0) * (2.0 / z.dim() as f64)),
    }
}

/// Map an unconstrained pre-image into the open action box:
/// `a = min + (max - min) * (tanh(u) + 1) / 2`.
pub fn reparam_action(u: &DVector<f64>, bounds: &ActionBounds) -> Action {
    Action(DVector::from_fn(u.len(), |i, _| {
        bounds.min[i] + (bounds.max[i] - bounds.min[i]) * (u[i].tanh() + 1.0) / 2.0
    }))
}

/// Componentwise derivative `da/du` of [`reparam_action`].
pub fn reparam_jacobian_diag(u: &DVector<f64>, bounds: &ActionBounds) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| {
        let t = u[i].tanh();
        (bounds.max[i] - bounds.min[i]) * (1.0 - t * t) / 2.0
    })
}

/// Exact inverse of [`reparam_action`]; requires strictly interior actions.
pub fn reparam_inverse(a: &Action, bounds: &ActionBounds) -> Result<DVector<f64>> {
    if !bounds.strictly_inside(&a.0) {
        return Err(Error::InvalidConfig(
            "action on or outside bounds has no pre-image".into(),
        ));
    }
    Ok(DVector::from_fn(a.dim(), |i, _| {
        let w = 2.0 * (a.0[i] - bounds.min[i]) / (bounds.max[i] - bounds.min[i]) - 1.0;
        0.5 * ((1.0 + w) / (1.0 - w)).ln()
    }))
}

/// Sum of the Lagrangian penalty terms `lambda^T r + (rho/2) ||r||^2`.
pub fn augmented_penalty(residuals: &[DVector<f64>], dual: &DualState) -> f64 {
    residuals
        .iter()
        .zip(dual.lambda.iter())
        .map(|(r, l)| l.dot(r) + 0.5 * dual.rho * r.norm_squared())
        .sum()
}

/// One grounding instance: the remaining horizon of one replanning step.
///
/// `history` is the window ending at the pinned current latent (its newest
/// entry IS `z_t`); `guidance` holds `z^vid_{t+1..T}`, index-aligned with the
/// decision latents; the alignment sum runs over all but the last entry, the
/// terminal latent is pulled to `goal` instead.
pub struct GroundingProblem<'a> {
    pub dynamics: &'a LatentDynamics,
    pub bounds: ActionBounds,
    pub history: History,
    pub guidance: Vec<LatentState>,
    pub goal: LatentState,
    pub weights: WeightConfig,
    pub metric: AlignmentMetric,
    pub action_param: ActionParam,
}

impl<'a> GroundingProblem<'a> {
    pub fn new(
        dynamics: &'a LatentDynamics,
        bounds: ActionBounds,
        history: History,
        guidance: Vec<LatentState>,
        goal: LatentState,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        cfg.weights.validate()?;
        if guidance.is_empty() {
            return Err(Error::InvalidConfig("empty remaining horizon".into()));
        }
        for (i, z) in guidance.iter().enumerate() {
            let norm = z.0.norm();
            if !norm.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "guidance frame {i} is not finite"
                )));
            }
            if cfg.metric == AlignmentMetric::Cosine && norm <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "guidance frame {i} has zero norm"
                )));
            }
        }
        if !goal.0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("goal latent is not finite".into()));
        }
        Ok(GroundingProblem {
            dynamics,
            bounds,
            history,
            guidance,
            goal,
            weights: cfg.weights,
            metric: cfg.metric,
            action_param: cfg.action_param,
        })
    }

    /// Remaining horizon length `R`.
    pub fn horizon(&self) -> usize {
        self.guidance.len()
    }

    pub fn pinned(&self) -> &LatentState {
        self.history.latents.last().expect("history is never empty")
    }

    /// Initialize primal variables from the guidance with zero pre-images
    /// (mid-box actions).
    pub fn init_from_guidance(&self) -> DecisionVars {
        DecisionVars {
            latents: self.guidance.clone(),
            pre_actions: vec![DVector::zeros(self.bounds.dim()); self.horizon()],
        }
    }

    /// Reparameterized actions for the current variables.
    pub fn actions(&self, vars: &DecisionVars) -> Vec<Action> {
        match self.action_param {
            ActionParam::Tanh => vars
                .pre_actions
                .iter()
                .map(|u| reparam_action(u, &self.bounds))
                .collect(),
            ActionParam::ProjectedClip => vars
                .pre_actions
                .iter()
                .map(|u| Action(self.bounds.clip(u)))
                .collect(),
        }
    }

    /// Full latent list for steps `t-H+1 .. T` (history, pinned, decisions).
    fn full_latents(&self, vars: &DecisionVars) -> Vec<LatentState> {
        let mut full = self.history.latents.clone();
        full.extend(vars.latents.iter().cloned());
        full
    }

    /// Full action list for steps `t-H+1 .. T-1`.
    fn full_actions(&self, vars: &DecisionVars) -> Vec<Action> {
        let mut full = self.history.actions.clone();
        full.extend(self.actions(vars));
        full
    }

    /// All dynamics residuals `r_tau = z_{tau+1} - f(window)`, `tau = 0..R-1`
    /// relative to the pinned step.
    pub fn residuals(&self, vars: &DecisionVars) -> Result<Vec<DVector<f64>>> {
        let h = self.dynamics.history();
        let lat = self.full_latents(vars);
        let act = self.full_actions(vars);
        let r_len = self.horizon();
        let mut out = Vec::with_capacity(r_len);
        for tau in 0..r_len {
            let pred = self
                .dynamics
                .latent_step(&lat[tau..tau + h], &act[tau..tau + h])?;
            out.push(&lat[tau + h].0 - pred.0);
        }
        Ok(out)
    }

    /// Residual at one constraint index (0-based from the pinned step).
    pub fn dynamics_residual(&self, vars: &DecisionVars, tau: usize) -> Result<DVector<f64>> {
        if tau >= self.horizon() {
            return Err(Error::IndexOutOfRange(format!(
                "residual index {tau} >= horizon {}",
                self.horizon()
            )));
        }
        let h = self.dynamics.history();
        let lat = self.full_latents(vars);
        let act = self.full_actions(vars);
        let pred = self
            .dynamics
            .latent_step(&lat[tau..tau + h], &act[tau..tau + h])?;
        Ok(&lat[tau + h].0 - pred.0)
    }

    /// The three objective terms `(video, goal, regularization)`, unweighted.
    pub fn cost_terms(&self, vars: &DecisionVars) -> Result<(f64, f64, f64)> {
        let r_len = self.horizon();
        let mut video = 0.0;
        if self.weights.lambda_v != 0.0 {
            for j in 0..r_len.saturating_sub(1) {
                video += alignment_loss(self.metric, &vars.latents[j], &self.guidance[j])?;
            }
        }
        let goal = goal_loss(&vars.latents[r_len - 1], &self.goal)?;
        let reg: f64 = self
            .actions(vars)
            .iter()
            .map(|a| a.0.norm_squared())
            .sum();
        Ok((video, goal, reg))
    }

    /// Weighted objective of the constrained problem.
    pub fn latent_cost(&self, vars: &DecisionVars) -> Result<f64> {
        let (video, goal, reg) = self.cost_terms(vars)?;
        Ok(self.weights.lambda_v * video + self.weights.lambda_g * goal + self.weights.lambda_r * reg)
    }

    /// Objective plus Lagrangian penalty terms.
    pub fn augmented_lagrangian(&self, vars: &DecisionVars, dual: &DualState) -> Result<f64> {
        let cost = self.latent_cost(vars)?;
        let residuals = self.residuals(vars)?;
        Ok(cost + augmented_penalty(&residuals, dual))
    }

    /// Exact gradients of the augmented Lagrangian with respect to the free
    /// latents and the action pre-images. Returns the residuals as well so
    /// the solver evaluates the dynamics once per iteration.
    pub fn gradients(
        &self,
        vars: &DecisionVars,
        dual: &DualState,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let h = self.dynamics.history();
        let d = self.dynamics.latent_dim();
        let m = self.bounds.dim();
        let r_len = self.horizon();
        let lat = self.full_latents(vars);
        let act = self.full_actions(vars);
        let actions = self.actions(vars);

        let mut grad_z = vec![DVector::zeros(d); r_len];
        let mut grad_a = vec![DVector::zeros(m); r_len];

        // objective terms
        if self.weights.lambda_v != 0.0 {
            for j in 0..r_len.saturating_sub(1) {
                grad_z[j] += alignment_grad(self.metric, &vars.latents[j], &self.guidance[j])?
                    * self.weights.lambda_v;
            }
        }
        grad_z[r_len - 1] += (&vars.latents[r_len - 1].0 - &self.goal.0)
            * (2.0 * self.weights.lambda_g / d as f64);
        for (j, a) in actions.iter().enumerate() {
            grad_a[j] += &a.0 * (2.0 * self.weights.lambda_r);
        }

        // constraint terms
        let mut residuals = Vec::with_capacity(r_len);
        for tau in 0..r_len {
            let z_win = &lat[tau..tau + h];
            let a_win = &act[tau..tau + h];
            let pred = self.dynamics.latent_step(z_win, a_win)?;
            let r = &lat[tau + h].0 - pred.0;
            let w = &dual.lambda[tau] + &r * dual.rho;

            // d r_tau / d z_{t+tau+1} = I
            grad_z[tau] += &w;

            // minus J^T w for every window slot that is a decision variable:
            // window latent slot `i` sits at step t + tau + i - H + 1, i.e.
            // decision latent index tau + i - H; actions shift by one
            let (gz, ga) = self.dynamics.latent_step_vjp(z_win, a_win, &w)?;
            for (slot, g) in gz.into_iter().enumerate() {
                let j = tau as isize + slot as isize - h as isize;
                if j >= 0 {
                    grad_z[j as usize] -= &g;
                }
            }
            for (slot, g) in ga.into_iter().enumerate() {
                let j = tau as isize + slot as isize - h as isize + 1;
                if j >= 0 {
                    grad_a[j as usize] -= &g;
                }
            }
            residuals.push(r);
        }

        // chain through the action parameterization
        let grad_u = match self.action_param {
            ActionParam::Tanh => vars
                .pre_actions
                .iter()
                .zip(grad_a.iter())
                .map(|(u, g)| g.component_mul(&reparam_jacobian_diag(u, &self.bounds)))
                .collect(),
            ActionParam::ProjectedClip => grad_a,
        };

        Ok((grad_z, grad_u, residuals))
    }

    /// Central finite differences of the augmented Lagrangian; the
    /// independent check for [`GroundingProblem::gradients`].
    pub fn finite_diff_gradients(
        &self,
        vars: &DecisionVars,
        dual: &DualState,
        step: f64,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        let mut gz = Vec::with_capacity(vars.latents.len());
        for j in 0..vars.latents.len() {
            let mut g = DVector::zeros(vars.latents[j].dim());
            for k in 0..vars.latents[j].dim() {
                let mut vp = vars.clone();
                let mut vm = vars.clone();
                vp.latents[j].0[k] += step;
                vm.latents[j].0[k] -= step;
                g[k] = (self.augmented_lagrangian(&vp, dual)?
                    - self.augmented_lagrangian(&vm, dual)?)
                    / (2.0 * step);
            }
            gz.push(g);
        }
        let mut gu = Vec::with_capacity(vars.pre_actions.len());
        for j in 0..vars.pre_actions.len() {
            let mut g = DVector::zeros(vars.pre_actions[j].len());
            for k in 0..vars.pre_actions[j].len() {
                let mut vp = vars.clone();
                let mut vm = vars.clone();
                vp.pre_actions[j][k] += step;
                vm.pre_actions[j][k] -= step;
                g[k] = (self.augmented_lagrangian(&vp, dual)?
                    - self.augmented_lagrangian(&vm, dual)?)
                    / (2.0 * step);
            }
            gu.push(g);
        }
        Ok((gz, gu))
    }
}

/// Per-outer-iteration diagnostics row.
#[derive(Debug, Clone, Serialize)]
pub struct OuterDiag {
    pub outer_iter: usize,
    pub rho: f64,
    pub max_residual: f64,
    pub cost: f64,
    pub video_term: f64,
    pub goal_term: f64,
    pub reg_term: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub outer: Vec<OuterDiag>,
    pub final_cost: f64,
    pub final_max_residual: f64,
    pub aborted: bool,
}

impl SolveDiagnostics {
    /// CSV rows matching the documented diagnostics schema.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("outer_iter,rho,max_residual,cost,video_term,goal_term,reg_term\n");
        for row in &self.outer {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                row.outer_iter,
                row.rho,
                row.max_residual,
                row.cost,
                row.video_term,
                row.goal_term,
                row.reg_term
            ));
        }
        out
    }
}

/// Result of one full solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub vars: DecisionVars,
    pub actions: Vec<Action>,
    pub diagnostics: SolveDiagnostics,
}

fn max_residual_norm(residuals: &[DVector<f64>]) -> f64 {
    residuals.iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// One full augmented-Lagrangian solve: `outer_iters` rounds of
/// `inner_iters` Adam steps on the primal variables, followed by dual ascent
/// and penalty growth. Adam moments are created fresh here and persist across
/// inner and outer iterations. A non-finite loss aborts and returns the last
/// finite iterate flagged as aborted.
pub fn alm_solve(
    problem: &GroundingProblem<'_>,
    init: DecisionVars,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    let r_len = problem.horizon();
    if init.latents.len() != r_len || init.pre_actions.len() != r_len {
        return Err(Error::DimensionMismatch {
            expected: r_len,
            got: init.latents.len(),
        });
    }
    let d = problem.dynamics.latent_dim();
    let m = problem.bounds.dim();
    let mut vars = init;
    let mut dual = DualState::fresh(r_len, d, cfg);
    let mut adam = Adam::new(r_len * (d + m), cfg.adam);
    let mut flat = pack(&vars, d, m);
    let mut grad_flat = DVector::zeros(flat.len());
    let mut diag = SolveDiagnostics {
        outer: Vec::with_capacity(cfg.outer_iters),
        final_cost: f64::NAN,
        final_max_residual: f64::NAN,
        aborted: false,
    };

    'outer: for outer in 0..cfg.outer_iters {
        adam.hyper.lr = cfg.adam.lr * cfg.lr_decay.powi(outer as i32);
        for _ in 0..cfg.inner_iters {
            let (gz, gu, residuals) = problem.gradients(&vars, &dual)?;
            if residuals.iter().any(|r| !r.iter().all(|v| v.is_finite())) {
                diag.aborted = true;
                break 'outer;
            }
            for (j, g) in gz.iter().enumerate() {
                let dst = &mut grad_flat.as_mut_slice()[j * d..(j + 1) * d];
                if cfg.freeze_latents {
                    dst.fill(0.0);
                } else {
                    dst.copy_from_slice(g.as_slice());
                }
            }
            let base = r_len * d;
            for (j, g) in gu.iter().enumerate() {
                grad_flat.as_mut_slice()[base + j * m..base + (j + 1) * m]
                    .copy_from_slice(g.as_slice());
            }
            if !grad_flat.iter().all(|v| v.is_finite()) {
                diag.aborted = true;
                break 'outer;
            }
            adam.step(&mut flat, &grad_flat);
            if problem.action_param == ActionParam::ProjectedClip {
                for j in 0..r_len {
                    let seg = &mut flat.as_mut_slice()[base + j * m..base + (j + 1) * m];
                    for (i, v) in seg.iter_mut().enumerate() {
                        *v = v.clamp(problem.bounds.min[i], problem.bounds.max[i]);
                    }
                }
            }
            unpack(&flat, &mut vars, d, m);
        }

        let residuals = problem.residuals(&vars)?;
        let (video, goal, reg) = problem.cost_terms(&vars)?;
        let cost = problem.weights.lambda_v * video
            + problem.weights.lambda_g * goal
            + problem.weights.lambda_r * reg;
        if !cost.is_finite() {
            diag.aborted = true;
            break;
        }
        diag.outer.push(OuterDiag {
            outer_iter: outer,
            rho: dual.rho,
            max_residual: max_residual_norm(&residuals),
            cost,
            video_term: video,
            goal_term: goal,
            reg_term: reg,
        });
        dual.ascend(&residuals);
        dual.grow_penalty();
    }

    let residuals = problem.residuals(&vars)?;
    diag.final_max_residual = max_residual_norm(&residuals);
    diag.final_cost = problem.latent_cost(&vars).unwrap_or(f64::NAN);
    let actions = problem.actions(&vars);
    Ok(SolveResult {
        vars,
        actions,
        diagnostics: diag,
    })
}

fn pack(vars: &DecisionVars, d: usize, m: usize) -> DVector<f64> {
    let r = vars.latents.len();
    let mut flat = DVector::zeros(r * (d + m));
    for (j, z) in vars.latents.iter().enumerate() {
        flat.as_mut_slice()[j * d..(j + 1) * d].copy_from_slice(z.0.as_slice());
    }
    let base = r * d;
    for (j, u) in vars.pre_actions.iter().enumerate() {
        flat.as_mut_slice()[base + j * m..base + (j + 1) * m].copy_from_slice(u.as_slice());
    }
    flat
}

fn unpack(flat: &DVector<f64>, vars: &mut DecisionVars, d: usize, m: usize) {
    let r = vars.latents.len();
    for (j, z) in vars.latents.iter_mut().enumerate() {
        z.0.as_mut_slice()
            .copy_from_slice(&flat.as_slice()[j * d..(j + 1) * d]);
    }
    let base = r * d;
    for (j, u) in vars.pre_actions.iter_mut().enumerate() {
        u.as_mut_slice()
            .copy_from_slice(&flat.as_slice()[base + j * m..base + (j + 1) * m]);
    }
}
