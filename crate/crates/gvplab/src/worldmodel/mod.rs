//! Action-conditioned latent world model: frozen linear-isometry encoder plus
//! latent dynamics with exact Jacobians.
//!
//! Two dynamics kinds exist. `AnalyticConjugate` conjugates a smoothed version
//! of the true environment step through the encoder: wall truncation and disc
//! contact are replaced by logistic gates and soft hinges of temperature
//! `beta`, so the planner sees C^1 dynamics that converge pointwise to the
//! hard step as `beta` grows. `LearnedMlp` is a small tanh network trained on
//! transition data. The planner model deliberately differs from ground truth;
//! that mismatch is part of the experimental design.

mod dual;
mod mlp;

pub use mlp::Mlp;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::{env_reset, EnvKind, EnvSpec, WallGeometry};
use crate::error::{Error, Result};
use crate::opt::{Adam, AdamParams};
use crate::rng::RngStream;
use crate::types::{Action, LatentState, Observation};

use dual::Dual;

/// Default smoothing temperature for the analytic dynamics.
pub const DEFAULT_BETA: f64 = 200.0;

/// Default history length for the learned dynamics.
pub const DEFAULT_MLP_HISTORY: usize = 3;

/// Frozen linear encoder with orthonormal columns (`d >= n`).
///
/// `decode` is the exact least-squares left inverse `E^T z`; it exists for
/// diagnostics only, planning never decodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    matrix: DMatrix<f64>,
}

impl Encoder {
    /// Identity embedding (`d = n`).
    pub fn identity(n: usize) -> Self {
        Encoder {
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Seeded random matrix with orthonormal columns via QR.
    pub fn random_orthonormal(latent_dim: usize, obs_dim: usize, stream: &RngStream) -> Result<Self> {
        if latent_dim < obs_dim {
            return Err(Error::InvalidConfig(
                "latent dim must be >= observation dim".into(),
            ));
        }
        let mut rng = stream.rng();
        let raw = DMatrix::from_fn(latent_dim, obs_dim, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let q = raw.qr().q();
        let gram = q.transpose() * &q;
        let err = (&gram - DMatrix::identity(obs_dim, obs_dim)).amax();
        assert!(err < 1e-10, "QR produced non-orthonormal columns");
        Ok(Encoder { matrix: q })
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn encode(&self, o: &Observation) -> LatentState {
        LatentState(self.encode_vec(&o.0))
    }

    pub fn decode(&self, z: &LatentState) -> Observation {
        Observation(self.decode_vec(&z.0))
    }

    pub fn encode_vec(&self, o: &DVector<f64>) -> DVector<f64> {
        assert_eq!(o.len(), self.obs_dim(), "observation dim mismatch");
        &self.matrix * o
    }

    pub fn decode_vec(&self, z: &DVector<f64>) -> DVector<f64> {
        assert_eq!(z.len(), self.latent_dim(), "latent dim mismatch");
        self.matrix.transpose() * z
    }
}

/// Latent transition model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentDynamics {
    /// Smoothed environment step conjugated through the encoder. Only the
    /// newest history slot matters; older slots are accepted for interface
    /// parity and contribute zero Jacobians.
    AnalyticConjugate {
        spec: EnvSpec,
        encoder: Encoder,
        beta: f64,
        history: usize,
    },
    /// Two-hidden-layer tanh network over the concatenated history.
    LearnedMlp {
        mlp: Mlp,
        latent_dim: usize,
        action_dim: usize,
        history: usize,
    },
}

impl LatentDynamics {
    pub fn analytic(spec: EnvSpec, encoder: Encoder, beta: f64) -> Self {
        LatentDynamics::AnalyticConjugate {
            spec,
            encoder,
            beta,
            history: 1,
        }
    }

    pub fn history(&self) -> usize {
        match self {
            LatentDynamics::AnalyticConjugate { history, .. } => *history,
            LatentDynamics::LearnedMlp { history, .. } => *history,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            LatentDynamics::AnalyticConjugate { encoder, .. } => encoder.latent_dim(),
            LatentDynamics::LearnedMlp { latent_dim, .. } => *latent_dim,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            LatentDynamics::AnalyticConjugate { spec, .. } => spec.action_dim(),
            LatentDynamics::LearnedMlp { action_dim, .. } => *action_dim,
        }
    }

    fn check_histories(&self, z_hist: &[LatentState], a_hist: &[Action]) -> Result<()> {
        let h = self.history();
        if z_hist.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: z_hist.len(),
            });
        }
        if a_hist.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: a_hist.len(),
            });
        }
        let d = self.latent_dim();
        let m = self.action_dim();
        for z in z_hist {
            if z.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: z.dim(),
                });
            }
        }
        for a in a_hist {
            if a.dim() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: a.dim(),
                });
            }
        }
        Ok(())
    }

    /// Predict the next latent from `H` latents and `H` actions (windows both
    /// end at the current step; the last action is the one being applied).
    pub fn latent_step(&self, z_hist: &[LatentState], a_hist: &[Action]) -> Result<LatentState> {
        self.check_histories(z_hist, a_hist)?;
        match self {
            LatentDynamics::AnalyticConjugate {
                spec,
                encoder,
                beta,
                ..
            } => {
                let z = &z_hist[z_hist.len() - 1].0;
                let a = &a_hist[a_hist.len() - 1].0;
                let obs = encoder.decode_vec(z);
                let next = analytic_obs_step_value(spec, *beta, &obs, a);
                Ok(LatentState(encoder.encode_vec(&next)))
            }
            LatentDynamics::LearnedMlp { mlp, .. } => {
                let input = concat_history(z_hist, a_hist);
                Ok(LatentState(mlp.forward(&input)))
            }
        }
    }

    /// Exact Jacobians of `latent_step` with respect to every history slot,
    /// oldest first: (`d(z')/d(z_i)` as `d x d`, `d(z')/d(a_i)` as `d x m`).
    pub fn latent_jacobians(
        &self,
        z_hist: &[LatentState],
        a_hist: &[Action],
    ) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
        self.check_histories(z_hist, a_hist)?;
        let h = self.history();
        let d = self.latent_dim();
        let m = self.action_dim();
        match self {
            LatentDynamics::AnalyticConjugate {
                spec,
                encoder,
                beta,
                ..
            } => {
                let z = &z_hist[h - 1].0;
                let a = &a_hist[h - 1].0;
                let obs = encoder.decode_vec(z);
                let (jp, ja) = analytic_obs_jacobians(spec, *beta, &obs, a);
                let e = encoder.matrix();
                let mut dz = vec![DMatrix::zeros(d, d); h];
                let mut da = vec![DMatrix::zeros(d, m); h];
                dz[h - 1] = e * &jp * e.transpose();
                da[h - 1] = e * &ja;
                Ok((dz, da))
            }
            LatentDynamics::LearnedMlp { mlp, .. } => {
                let input = concat_history(z_hist, a_hist);
                let cache = mlp.forward_cached(&input);
                let full = mlp.input_jacobian(&cache);
                let mut dz = Vec::with_capacity(h);
                let mut da = Vec::with_capacity(h);
                for i in 0..h {
                    dz.push(full.columns(i * d, d).into_owned());
                }
                for i in 0..h {
                    da.push(full.columns(h * d + i * m, m).into_owned());
                }
                Ok((dz, da))
            }
        }
    }

    /// Vector-Jacobian products `(J_{z_i}^T w, J_{a_i}^T w)` without
    /// materializing the Jacobians; this is the solver's hot path.
    pub fn latent_step_vjp(
        &self,
        z_hist: &[LatentState],
        a_hist: &[Action],
        w: &DVector<f64>,
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.check_histories(z_hist, a_hist)?;
        let h = self.history();
        let d = self.latent_dim();
        let m = self.action_dim();
        match self {
            LatentDynamics::AnalyticConjugate {
                spec,
                encoder,
                beta,
                ..
            } => {
                let z = &z_hist[h - 1].0;
                let a = &a_hist[h - 1].0;
                let obs = encoder.decode_vec(z);
                let (jp, ja) = analytic_obs_jacobians(spec, *beta, &obs, a);
                let wo = encoder.decode_vec(w);
                let mut gz = vec![DVector::zeros(d); h];
                let mut ga = vec![DVector::zeros(m); h];
                gz[h - 1] = encoder.encode_vec(&(jp.transpose() * &wo));
                ga[h - 1] = ja.transpose() * wo;
                Ok((gz, ga))
            }
            LatentDynamics::LearnedMlp { mlp, .. } => {
                let input = concat_history(z_hist, a_hist);
                let cache = mlp.forward_cached(&input);
                let full = mlp.input_vjp(&cache, w);
                let mut gz = Vec::with_capacity(h);
                let mut ga = Vec::with_capacity(h);
                for i in 0..h {
                    gz.push(full.rows(i * d, d).into_owned());
                }
                for i in 0..h {
                    ga.push(full.rows(h * d + i * m, m).into_owned());
                }
                Ok((gz, ga))
            }
        }
    }

    /// Open-loop rollout: apply `actions` in order, shifting histories, and
    /// return `z_1..z_T`. `past_actions` holds the `H-1` most recent executed
    /// actions (empty for `H = 1`).
    pub fn rollout(
        &self,
        z_hist: &[LatentState],
        past_actions: &[Action],
        actions: &[Action],
    ) -> Result<Vec<LatentState>> {
        let mut hist = History::from_parts(z_hist.to_vec(), past_actions.to_vec(), self.history())?;
        let mut out = Vec::with_capacity(actions.len());
        for a in actions {
            let z = self.step_with_history(&hist, a)?;
            hist.advance(z.clone(), a.clone());
            out.push(z);
        }
        Ok(out)
    }

    /// One step from a [`History`] window.
    pub fn step_with_history(&self, hist: &History, action: &Action) -> Result<LatentState> {
        let mut a_window = hist.actions.clone();
        a_window.push(action.clone());
        self.latent_step(&hist.latents, &a_window)
    }
}

/// Rolling history window: `H` latents ending at the current step and the
/// `H-1` most recent executed actions. Episode starts are padded by repeating
/// the initial latent with zero actions.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub latents: Vec<LatentState>,
    pub actions: Vec<Action>,
    h: usize,
}

impl History {
    pub fn seeded(z0: LatentState, h: usize, action_dim: usize) -> Self {
        History {
            latents: vec![z0; h],
            actions: vec![Action::zeros(action_dim); h.saturating_sub(1)],
            h,
        }
    }

    pub fn from_parts(latents: Vec<LatentState>, actions: Vec<Action>, h: usize) -> Result<Self> {
        if latents.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: latents.len(),
            });
        }
        if actions.len() + 1 != h && !(h == 1 && actions.is_empty()) {
            return Err(Error::DimensionMismatch {
                expected: h - 1,
                got: actions.len(),
            });
        }
        Ok(History {
            latents,
            actions,
            h,
        })
    }

    /// Record an executed step: `action` was taken, `z_next` was reached.
    pub fn advance(&mut self, z_next: LatentState, action: Action) {
        self.latents.remove(0);
        self.latents.push(z_next);
        if self.h > 1 {
            self.actions.push(action);
            self.actions.remove(0);
        }
    }

    /// Replace the newest latent (re-anchoring to a fresh observation).
    pub fn pin_current(&mut self, z: LatentState) {
        *self.latents.last_mut().expect("history is never empty") = z;
    }
}

fn concat_history(z_hist: &[LatentState], a_hist: &[Action]) -> DVector<f64> {
    let total: usize = z_hist.iter().map(|z| z.dim()).sum::<usize>()
        + a_hist.iter().map(|a| a.dim()).sum::<usize>();
    let mut v = Vec::with_capacity(total);
    for z in z_hist {
        v.extend_from_slice(z.0.as_slice());
    }
    for a in a_hist {
        v.extend_from_slice(a.0.as_slice());
    }
    DVector::from_vec(v)
}

// ---------------------------------------------------------------------------
// Smooth observation-space dynamics
// ---------------------------------------------------------------------------

const DIV_GUARD: f64 = 1e-9;

/// Bias (in logistic units) applied to the "which side does the motion start
/// from" gates. Wall truncation parks agents exactly on a face, and an
/// unbiased gate reads that point as half-permeable, letting planned
/// trajectories tunnel at half rate. The bias shifts the effective boundary
/// by `bias / beta` into the allowed region, which vanishes as beta grows.
const GATE_BIAS: f64 = 4.0;

fn smooth_arena<const N: usize>(x: Dual<N>, sharp: f64) -> Dual<N> {
    x.soft_max(0.0, sharp).soft_min(1.0, sharp)
}

/// Smoothed WallNav step. Candidate truncation events (face crossings with
/// the crossing point outside the gap, gap-edge crossings inside the slab)
/// are gated by logistic factors and blended; distinct events can only be
/// jointly active near wall corners where their truncation points coincide.
fn smooth_wallnav<const N: usize>(
    wall: &WallGeometry,
    beta: f64,
    p: [Dual<N>; 2],
    a: [Dual<N>; 2],
) -> [Dual<N>; 2] {
    let one = Dual::<N>::con(1.0);
    let con = Dual::<N>::con;
    let sig = |x: Dual<N>| (x * beta).sigmoid();
    let sig_from = |x: Dual<N>| (x * beta + Dual::con(GATE_BIAS)).sigmoid();

    let qx = p[0] + a[0];
    let qy = p[1] + a[1];
    let face_l = wall.x_pos - wall.half_thickness;
    let face_r = wall.x_pos + wall.half_thickness;
    let e_lo = wall.gap_center - wall.gap_half_width;
    let e_hi = wall.gap_center + wall.gap_half_width;

    let outside_gap = |y: Dual<N>| one - sig(y - con(e_lo)) * sig(con(e_hi) - y);
    let inside_slab = |x: Dual<N>| sig(x - con(face_l)) * sig(con(face_r) - x);

    // left face crossing, moving right
    let t1l = ((con(face_l) - p[0]) / a[0].guard_away_from_zero(DIV_GUARD)).soft_clamp01(beta);
    let y1l = p[1] + t1l * a[1];
    let g1 = sig_from(con(face_l) - p[0]) * sig(qx - con(face_l)) * outside_gap(y1l);

    // right face crossing, moving left
    let t1r = ((con(face_r) - p[0]) / a[0].guard_away_from_zero(DIV_GUARD)).soft_clamp01(beta);
    let y1r = p[1] + t1r * a[1];
    let g2 = sig_from(p[0] - con(face_r)) * sig(con(face_r) - qx) * outside_gap(y1r);

    // leaving the gap through its lower edge while inside the slab
    let t2lo = ((con(e_lo) - p[1]) / a[1].guard_away_from_zero(DIV_GUARD)).soft_clamp01(beta);
    let x2lo = p[0] + t2lo * a[0];
    let g3 = sig_from(p[1] - con(e_lo)) * sig(con(e_lo) - qy) * inside_slab(x2lo);

    // leaving the gap through its upper edge while inside the slab
    let t2hi = ((con(e_hi) - p[1]) / a[1].guard_away_from_zero(DIV_GUARD)).soft_clamp01(beta);
    let x2hi = p[0] + t2hi * a[0];
    let g4 = sig_from(con(e_hi) - p[1]) * sig(qy - con(e_hi)) * inside_slab(x2hi);

    let g_free = (one - g1) * (one - g2) * (one - g3) * (one - g4);
    let wsum = g1 + g2 + g3 + g4 + g_free;
    let rx = (g1 * con(face_l) + g2 * con(face_r) + g3 * x2lo + g4 * x2hi + g_free * qx) / wsum;
    let ry = (g1 * y1l + g2 * y1r + g3 * con(e_lo) + g4 * con(e_hi) + g_free * qy) / wsum;
    [smooth_arena(rx, beta), smooth_arena(ry, beta)]
}

/// Smoothed PushToy step: soft clamp the agent target, then displace the
/// block by a soft hinge of the penetration depth along the contact normal.
fn smooth_pushtoy<const N: usize>(
    rsum: f64,
    beta: f64,
    p: [Dual<N>; 4],
    a: [Dual<N>; 2],
) -> [Dual<N>; 4] {
    let con = Dual::<N>::con;
    let ax = smooth_arena(p[0] + a[0], beta);
    let ay = smooth_arena(p[1] + a[1], beta);
    let dx = p[2] - ax;
    let dy = p[3] - ay;
    let dist = (dx * dx + dy * dy + con(1e-18)).sqrt();
    let depth = (con(rsum) - dist).softplus(beta);
    let scale = depth / dist;
    let bx = smooth_arena(p[2] + dx * scale, beta);
    let by = smooth_arena(p[3] + dy * scale, beta);
    [ax, ay, bx, by]
}

fn analytic_obs_step_value(
    spec: &EnvSpec,
    beta: f64,
    obs: &DVector<f64>,
    act: &DVector<f64>,
) -> DVector<f64> {
    match spec.kind {
        EnvKind::WallNav { wall } => {
            let p = [Dual::<0>::con(obs[0]), Dual::<0>::con(obs[1])];
            let a = [Dual::<0>::con(act[0]), Dual::<0>::con(act[1])];
            let out = smooth_wallnav(&wall, beta, p, a);
            DVector::from_column_slice(&[out[0].v, out[1].v])
        }
        EnvKind::PushToy {
            agent_radius,
            block_radius,
        } => {
            let p = [
                Dual::<0>::con(obs[0]),
                Dual::<0>::con(obs[1]),
                Dual::<0>::con(obs[2]),
                Dual::<0>::con(obs[3]),
            ];
            let a = [Dual::<0>::con(act[0]), Dual::<0>::con(act[1])];
            let out = smooth_pushtoy(agent_radius + block_radius, beta, p, a);
            DVector::from_column_slice(&[out[0].v, out[1].v, out[2].v, out[3].v])
        }
    }
}

/// Observation-space Jacobians of the smooth step: `(d(next)/d(obs),
/// d(next)/d(act))`.
fn analytic_obs_jacobians(
    spec: &EnvSpec,
    beta: f64,
    obs: &DVector<f64>,
    act: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    match spec.kind {
        EnvKind::WallNav { wall } => {
            let p = [Dual::<4>::var(obs[0], 0), Dual::<4>::var(obs[1], 1)];
            let a = [Dual::<4>::var(act[0], 2), Dual::<4>::var(act[1], 3)];
            let out = smooth_wallnav(&wall, beta, p, a);
            let jp = DMatrix::from_fn(2, 2, |i, j| out[i].d[j]);
            let ja = DMatrix::from_fn(2, 2, |i, j| out[i].d[2 + j]);
            (jp, ja)
        }
        EnvKind::PushToy {
            agent_radius,
            block_radius,
        } => {
            let p = [
                Dual::<6>::var(obs[0], 0),
                Dual::<6>::var(obs[1], 1),
                Dual::<6>::var(obs[2], 2),
                Dual::<6>::var(obs[3], 3),
            ];
            let a = [Dual::<6>::var(act[0], 4), Dual::<6>::var(act[1], 5)];
            let out = smooth_pushtoy(agent_radius + block_radius, beta, p, a);
            let jp = DMatrix::from_fn(4, 4, |i, j| out[i].d[j]);
            let ja = DMatrix::from_fn(4, 2, |i, j| out[i].d[4 + j]);
            (jp, ja)
        }
    }
}

/// Hard environment step conjugated through an encoder; reference point for
/// smoothing-consistency checks.
pub fn hard_step_conjugated(
    spec: &EnvSpec,
    encoder: &Encoder,
    z: &LatentState,
    a: &Action,
) -> LatentState {
    let obs = encoder.decode(z);
    let state = crate::envs::state_from_observation(spec, &obs);
    let next = crate::envs::env_step(spec, &state, a);
    encoder.encode(&crate::envs::env_observe(&next))
}

// ---------------------------------------------------------------------------
// World model bundle and checkpoints
// ---------------------------------------------------------------------------

/// Encoder plus dynamics, constructed together so both sides share the same
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub encoder: Encoder,
    pub dynamics: LatentDynamics,
}

/// Default latent dimension per environment.
pub fn default_latent_dim(spec: &EnvSpec) -> usize {
    match spec.kind {
        EnvKind::WallNav { .. } => 8,
        EnvKind::PushToy { .. } => 12,
    }
}

impl WorldModel {
    /// Analytic world model with a seeded random orthonormal encoder.
    pub fn analytic(
        spec: &EnvSpec,
        latent_dim: usize,
        beta: f64,
        stream: &RngStream,
    ) -> Result<Self> {
        let encoder = Encoder::random_orthonormal(latent_dim, spec.obs_dim(), stream)?;
        let dynamics = LatentDynamics::analytic(spec.clone(), encoder.clone(), beta);
        Ok(WorldModel { encoder, dynamics })
    }

    /// Analytic model with per-environment default dimensions.
    pub fn analytic_default(spec: &EnvSpec, stream: &RngStream) -> Result<Self> {
        Self::analytic(spec, default_latent_dim(spec), DEFAULT_BETA, stream)
    }

    pub fn encode(&self, o: &Observation) -> LatentState {
        self.encoder.encode(o)
    }

    pub fn decode(&self, z: &LatentState) -> Observation {
        self.encoder.decode(z)
    }

    pub fn save_checkpoint<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = CheckpointFile {
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::MalformedFile(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: CheckpointFile =
            serde_json::from_str(&text).map_err(|e| Error::MalformedFile(e.to_string()))?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::MalformedFile(format!(
                "unsupported checkpoint version {}",
                file.version
            )));
        }
        Ok(file.model)
    }
}

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    model: WorldModel,
}

// ---------------------------------------------------------------------------
// Transition data and MLP training
// ---------------------------------------------------------------------------

/// One supervised transition: `H` latents, `H` actions, next latent.
#[derive(Debug, Clone)]
pub struct TransitionRecord {
    pub z_hist: Vec<LatentState>,
    pub a_hist: Vec<Action>,
    pub z_next: LatentState,
}

#[derive(Debug, Clone)]
pub struct TransitionDataset {
    pub history: usize,
    pub latent_dim: usize,
    pub action_dim: usize,
    pub records: Vec<TransitionRecord>,
}

/// Sample transitions from a teacher dynamics by short random rollouts from
/// feasible resets; early records keep their padded histories.
pub fn collect_transitions(
    spec: &EnvSpec,
    teacher: &WorldModel,
    history: usize,
    n_records: usize,
    stream: &RngStream,
) -> Result<TransitionDataset> {
    let d = teacher.encoder.latent_dim();
    let m = spec.action_dim();
    let mut records = Vec::with_capacity(n_records);
    let mut idx = 0u64;
    while records.len() < n_records {
        let ep_stream = stream.fork(idx);
        idx += 1;
        let mut rng = ep_stream.rng();
        let state = env_reset(spec, &ep_stream.fork(0));
        let z0 = teacher.encode(&crate::envs::env_observe(&state));
        let mut hist = History::seeded(z0, history, m);
        let warmup = rng.gen_range(0..=history);
        let steps = warmup + 1;
        for step in 0..steps {
            let a = Action(DVector::from_fn(m, |i, _| {
                rng.gen_range(spec.bounds.min[i]..spec.bounds.max[i])
            }));
            // the teacher sees only the newest slot, so its own window shape
            // is irrelevant; step directly in latent space
            let z_next = teacher.dynamics.latent_step(
                &vec![hist.latents.last().unwrap().clone(); teacher.dynamics.history()],
                &vec![a.clone(); teacher.dynamics.history()],
            )?;
            if step + 1 == steps {
                let mut a_window = hist.actions.clone();
                a_window.push(a.clone());
                records.push(TransitionRecord {
                    z_hist: hist.latents.clone(),
                    a_hist: a_window,
                    z_next: z_next.clone(),
                });
            }
            hist.advance(z_next, a);
        }
    }
    Ok(TransitionDataset {
        history,
        latent_dim: d,
        action_dim: m,
        records,
    })
}

/// MLP training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        MlpTrainConfig {
            hidden: 64,
            epochs: 80,
            batch_size: 64,
            lr: 3e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
}

/// Train an MLP dynamics on mean-squared next-latent error with mini-batch
/// Adam. Deterministic given `(dataset, cfg, stream)`.
pub fn train_mlp_dynamics(
    dataset: &TransitionDataset,
    cfg: &MlpTrainConfig,
    stream: &RngStream,
) -> Result<(LatentDynamics, TrainReport)> {
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let h = dataset.history;
    let d = dataset.latent_dim;
    let m = dataset.action_dim;
    let input_dim = h * (d + m);
    let mut rng = stream.rng();
    let mut mlp = Mlp::random(input_dim, cfg.hidden, d, &mut rng);

    let inputs: Vec<DVector<f64>> = dataset
        .records
        .iter()
        .map(|r| concat_history(&r.z_hist, &r.a_hist))
        .collect();
    let targets: Vec<&DVector<f64>> = dataset.records.iter().map(|r| &r.z_next.0).collect();

    let mut adam = Adam::new(
        mlp.param_count(),
        AdamParams {
            lr: cfg.lr,
            ..Default::default()
        },
    );
    let mut theta = mlp.flatten_params();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = mlp::MlpGrads::zeros_like(&mlp);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let cache = mlp.forward_cached(&inputs[i]);
                let err = &cache.output - targets[i];
                batch_loss += err.norm_squared() / d as f64;
                let dy = err * (2.0 / d as f64);
                grads.accumulate(&mlp.backward(&cache, &dy));
            }
            grads.scale(1.0 / chunk.len() as f64);
            epoch_loss += batch_loss;
            adam.step(&mut theta, &grads.flatten());
            mlp.set_from_flat(&theta);
        }
        epoch_losses.push(epoch_loss / inputs.len() as f64);
    }

    let final_loss = *epoch_losses.last().unwrap();
    Ok((
        LatentDynamics::LearnedMlp {
            mlp,
            latent_dim: d,
            action_dim: m,
            history: h,
        },
        TrainReport {
            epoch_losses,
            final_loss,
        },
    ))
}

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub samples: usize,
    pub pass: bool,
}

/// Sample a plausible evaluation point for `f`: encoded random feasible
/// observations with a short random action history.
fn sample_check_point(
    f: &LatentDynamics,
    stream: &RngStream,
) -> (Vec<LatentState>, Vec<Action>) {
    let h = f.history();
    let d = f.latent_dim();
    let m = f.action_dim();
    let mut rng = stream.rng();
    match f {
        LatentDynamics::AnalyticConjugate { spec, encoder, .. } => {
            let mut z_hist = Vec::with_capacity(h);
            for i in 0..h {
                let s = env_reset(spec, &stream.fork(1000 + i as u64));
                z_hist.push(encoder.encode(&crate::envs::env_observe(&s)));
            }
            let a_hist = (0..h)
                .map(|_| {
                    Action(DVector::from_fn(m, |i, _| {
                        rng.gen_range(spec.bounds.min[i]..spec.bounds.max[i])
                    }))
                })
                .collect();
            (z_hist, a_hist)
        }
        LatentDynamics::LearnedMlp { .. } => {
            let z_hist = (0..h)
                .map(|_| {
                    LatentState(DVector::from_fn(d, |_, _| {
                        rng.sample::<f64, _>(StandardNormal) * 0.5
                    }))
                })
                .collect();
            let a_hist = (0..h)
                .map(|_| Action(DVector::from_fn(m, |_, _| rng.gen_range(-0.1..0.1))))
                .collect();
            (z_hist, a_hist)
        }
    }
}

/// Compare analytic Jacobians against central finite differences at random
/// feasible points. Relative error uses a unit floor since Jacobian entries
/// are order one.
pub fn gradient_check(
    f: &LatentDynamics,
    samples: usize,
    tol: f64,
    stream: &RngStream,
) -> Result<GradCheckReport> {
    assert!(samples >= 1, "need at least one sample");
    let h = f.history();
    let d = f.latent_dim();
    let m = f.action_dim();
    let fd_h = 1e-6;
    let mut max_rel = 0.0f64;

    for s in 0..samples {
        let (z_hist, a_hist) = sample_check_point(f, &stream.fork(s as u64));
        let (jz, ja) = f.latent_jacobians(&z_hist, &a_hist)?;

        for slot in 0..h {
            for k in 0..d {
                let mut zp = z_hist.clone();
                let mut zm = z_hist.clone();
                zp[slot].0[k] += fd_h;
                zm[slot].0[k] -= fd_h;
                let fp = f.latent_step(&zp, &a_hist)?;
                let fm = f.latent_step(&zm, &a_hist)?;
                for i in 0..d {
                    let fd = (fp.0[i] - fm.0[i]) / (2.0 * fd_h);
                    let an = jz[slot][(i, k)];
                    let rel = (fd - an).abs() / an.abs().max(1.0);
                    max_rel = max_rel.max(rel);
                }
            }
            for k in 0..m {
                let mut ap = a_hist.clone();
                let mut am = a_hist.clone();
                ap[slot].0[k] += fd_h;
                am[slot].0[k] -= fd_h;
                let fp = f.latent_step(&z_hist, &ap)?;
                let fm = f.latent_step(&z_hist, &am)?;
                for i in 0..d {
                    let fd = (fp.0[i] - fm.0[i]) / (2.0 * fd_h);
                    let an = ja[slot][(i, k)];
                    let rel = (fd - an).abs() / an.abs().max(1.0);
                    max_rel = max_rel.max(rel);
                }
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        samples,
        pass: max_rel <= tol,
    })
}
