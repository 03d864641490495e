//! Python bindings: the main types and operations, with observations,
//! latents and actions exchanged as plain lists of floats.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gvplab::collocation::SolverConfig;
use gvplab::envs::{
    self, env_observe, env_step, env_success, state_from_observation, EnvSpec,
};
use gvplab::executor::{mpc_run, EpisodeResult, MpcConfig};
use gvplab::harness::campaign::run_campaign;
use gvplab::harness::config::ConfigFile;
use gvplab::harness::report::{render_report, ReportFormat};
use gvplab::rng::RngStream;
use gvplab::types::{Action, LatentState, Observation};
use gvplab::videoplan::{self, PlanSource, VideoPlan};
use gvplab::worldmodel::WorldModel;

fn to_py_err(e: gvplab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_env(name: &str) -> PyResult<EnvSpec> {
    match name.to_lowercase().as_str() {
        "wallnav" | "wall" => Ok(EnvSpec::wallnav()),
        "pushtoy" | "push" => Ok(EnvSpec::pushtoy()),
        other => Err(PyValueError::new_err(format!("unknown env {other}"))),
    }
}

fn obs_from(values: Vec<f64>) -> Observation {
    Observation::from_slice(&values)
}

fn plan_from(frames: Vec<Vec<f64>>, source: &str) -> PyResult<VideoPlan> {
    if frames.len() < 2 {
        return Err(PyValueError::new_err("plan needs at least two frames"));
    }
    Ok(VideoPlan {
        frames: frames.iter().map(|f| obs_from(f.clone())).collect(),
        source: PlanSource::parse(source).map_err(to_py_err)?,
    })
}

fn plan_to(plan: &VideoPlan) -> (Vec<Vec<f64>>, String) {
    (
        plan.frames
            .iter()
            .map(|f| f.0.iter().copied().collect())
            .collect(),
        plan.source.to_string(),
    )
}

/// A toy environment with exact dynamics.
#[pyclass]
struct Env {
    spec: EnvSpec,
}

#[pymethods]
impl Env {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        Ok(Env {
            spec: parse_env(name)?,
        })
    }

    fn obs_dim(&self) -> usize {
        self.spec.obs_dim()
    }

    fn action_dim(&self) -> usize {
        self.spec.action_dim()
    }

    /// Sample a feasible start observation.
    fn reset(&self, seed: u64) -> Vec<f64> {
        let state = envs::env_reset(&self.spec, &RngStream::new(seed));
        env_observe(&state).0.iter().copied().collect()
    }

    /// Apply one action; observations encode the full state.
    fn step(&self, obs: Vec<f64>, action: Vec<f64>) -> Vec<f64> {
        let state = state_from_observation(&self.spec, &obs_from(obs));
        let next = env_step(&self.spec, &state, &Action::from_slice(&action));
        env_observe(&next).0.iter().copied().collect()
    }

    /// `(success, distance)` of an observation against a goal observation.
    fn success(&self, obs: Vec<f64>, goal: Vec<f64>) -> (bool, f64) {
        let state = state_from_observation(&self.spec, &obs_from(obs));
        env_success(
            &self.spec,
            &state,
            &envs::Goal {
                target: obs_from(goal),
            },
        )
    }

    /// Expert demonstration: `(frames, actions)`.
    fn expert_plan(
        &self,
        obs0: Vec<f64>,
        goal: Vec<f64>,
        horizon: usize,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let state = state_from_observation(&self.spec, &obs_from(obs0));
        let (frames, actions) = envs::expert_plan(
            &self.spec,
            &state,
            &envs::Goal {
                target: obs_from(goal),
            },
            horizon,
        )
        .map_err(to_py_err)?;
        Ok((
            frames.iter().map(|f| f.0.iter().copied().collect()).collect(),
            actions.iter().map(|a| a.0.iter().copied().collect()).collect(),
        ))
    }

    /// ASCII rendering of a state.
    fn render(&self, obs: Vec<f64>, goal: Vec<f64>) -> String {
        let state = state_from_observation(&self.spec, &obs_from(obs));
        envs::render_frame(
            &self.spec,
            &state,
            &envs::Goal {
                target: obs_from(goal),
            },
        )
    }
}

/// Frozen encoder plus latent dynamics.
#[pyclass]
struct Model {
    model: WorldModel,
}

#[pymethods]
impl Model {
    #[new]
    fn new(env: &Env, seed: u64) -> PyResult<Self> {
        let model = WorldModel::analytic_default(&env.spec, &RngStream::new(seed).fork(1))
            .map_err(to_py_err)?;
        Ok(Model { model })
    }

    fn latent_dim(&self) -> usize {
        self.model.encoder.latent_dim()
    }

    fn encode(&self, obs: Vec<f64>) -> Vec<f64> {
        self.model
            .encode(&obs_from(obs))
            .0
            .iter()
            .copied()
            .collect()
    }

    fn decode(&self, latent: Vec<f64>) -> Vec<f64> {
        self.model
            .decode(&LatentState::from_slice(&latent))
            .0
            .iter()
            .copied()
            .collect()
    }

    /// One latent transition (history length 1).
    fn latent_step(&self, latent: Vec<f64>, action: Vec<f64>) -> PyResult<Vec<f64>> {
        let z = LatentState::from_slice(&latent);
        let a = Action::from_slice(&action);
        let next = self
            .model
            .dynamics
            .latent_step(&[z], &[a])
            .map_err(to_py_err)?;
        Ok(next.0.iter().copied().collect())
    }

    /// Open-loop latent rollout from a single latent.
    fn rollout(&self, latent: Vec<f64>, actions: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let z = LatentState::from_slice(&latent);
        let acts: Vec<Action> = actions.iter().map(|a| Action::from_slice(a)).collect();
        let rolled = self
            .model
            .dynamics
            .rollout(&[z], &[], &acts)
            .map_err(to_py_err)?;
        Ok(rolled
            .iter()
            .map(|z| z.0.iter().copied().collect())
            .collect())
    }

    fn save_checkpoint(&self, path: &str) -> PyResult<()> {
        self.model.save_checkpoint(path).map_err(to_py_err)
    }
}

#[pyfunction]
fn make_oracle_plan(
    env: &Env,
    obs0: Vec<f64>,
    goal: Vec<f64>,
    horizon: usize,
) -> PyResult<(Vec<Vec<f64>>, String)> {
    let state = state_from_observation(&env.spec, &obs_from(obs0));
    let plan = videoplan::make_oracle_plan(
        &env.spec,
        &state,
        &envs::Goal {
            target: obs_from(goal),
        },
        horizon,
    )
    .map_err(to_py_err)?;
    Ok(plan_to(&plan))
}

#[pyfunction]
fn corrupt_blur(frames: Vec<Vec<f64>>, k: usize) -> PyResult<(Vec<Vec<f64>>, String)> {
    let plan = plan_from(frames, "ORACLE")?;
    Ok(plan_to(&videoplan::corrupt_blur(&plan, k).map_err(to_py_err)?))
}

#[pyfunction]
fn corrupt_teleport(
    frames: Vec<Vec<f64>>,
    cut_start: usize,
    cut_len: usize,
) -> PyResult<(Vec<Vec<f64>>, String)> {
    let plan = plan_from(frames, "ORACLE")?;
    Ok(plan_to(
        &videoplan::corrupt_teleport(&plan, cut_start, cut_len).map_err(to_py_err)?,
    ))
}

#[pyfunction]
fn corrupt_drift(
    frames: Vec<Vec<f64>>,
    sigma0: f64,
    growth: f64,
    seed: u64,
) -> PyResult<(Vec<Vec<f64>>, String)> {
    let plan = plan_from(frames, "ORACLE")?;
    Ok(plan_to(
        &videoplan::corrupt_drift(&plan, sigma0, growth, &RngStream::new(seed))
            .map_err(to_py_err)?,
    ))
}

#[pyfunction]
fn align_temporal(
    frames: Vec<Vec<f64>>,
    source: &str,
    frame_skip: usize,
    target_t: usize,
) -> PyResult<(Vec<Vec<f64>>, String)> {
    let plan = plan_from(frames, source)?;
    Ok(plan_to(
        &videoplan::align_temporal(&plan, frame_skip, target_t).map_err(to_py_err)?,
    ))
}

fn episode_dict(py: Python<'_>, result: &EpisodeResult) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("success", result.success)?;
    d.set_item("final_distance", result.final_distance)?;
    d.set_item("steps", result.steps)?;
    d.set_item("aborted", result.aborted)?;
    d.set_item("final_max_residual", result.final_solve_residual())?;
    d.set_item(
        "executed_actions",
        result
            .executed_actions
            .iter()
            .map(|a| a.0.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )?;
    Ok(d.into())
}

/// Ground a guidance plan and execute it with receding-horizon control.
#[pyfunction]
#[pyo3(signature = (env, model, obs0, goal, frames, source = "ORACLE", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn solve_episode(
    py: Python<'_>,
    env: &Env,
    model: &Model,
    obs0: Vec<f64>,
    goal: Vec<f64>,
    frames: Vec<Vec<f64>>,
    source: &str,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let state = state_from_observation(&env.spec, &obs_from(obs0));
    let plan = plan_from(frames, source)?;
    let result = mpc_run(
        &env.spec,
        &state,
        &envs::Goal {
            target: obs_from(goal),
        },
        &plan,
        &model.model,
        &SolverConfig::default(),
        &MpcConfig::default(),
        &RngStream::new(seed),
    )
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    episode_dict(py, &result)
}

/// Execute a guidance plan open loop through exact inverse dynamics.
#[pyfunction]
fn unipi_episode(
    py: Python<'_>,
    env: &Env,
    obs0: Vec<f64>,
    goal: Vec<f64>,
    frames: Vec<Vec<f64>>,
) -> PyResult<Py<PyDict>> {
    let state = state_from_observation(&env.spec, &obs_from(obs0));
    let plan = plan_from(frames, "ORACLE")?;
    let result = gvplab::baselines::unipi_execute(
        &env.spec,
        &state,
        &envs::Goal {
            target: obs_from(goal),
        },
        &plan,
    );
    episode_dict(py, &result)
}

/// Run a campaign from a TOML config file; returns the report CSV.
#[pyfunction]
#[pyo3(signature = (config_path, jobs = None))]
fn campaign_csv(config_path: &str, jobs: Option<usize>) -> PyResult<String> {
    let spec = ConfigFile::load(config_path)
        .and_then(|f| f.resolve())
        .map_err(to_py_err)?;
    let report = run_campaign(&spec, jobs).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(render_report(&report, ReportFormat::Csv))
}

/// Gradient verification; returns `{pass, max_rel_err_dynamics, max_rel_err_solver}`.
#[pyfunction]
#[pyo3(signature = (seed = 7))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<Py<PyDict>> {
    let report = gvplab::harness::gradcheck::run_gradcheck(seed)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("pass", report.pass)?;
    d.set_item(
        "max_rel_err_dynamics",
        report
            .dynamics_wallnav
            .max_rel_err
            .max(report.dynamics_pushtoy.max_rel_err)
            .max(report.dynamics_mlp.max_rel_err),
    )?;
    d.set_item("max_rel_err_solver", report.alm_max_rel_err)?;
    Ok(d.into())
}

/// KKT equivalence check; returns `{pass, max_abs_dev}`.
#[pyfunction]
#[pyo3(signature = (instances = 10, seed = 7))]
fn oracle_lq(py: Python<'_>, instances: usize, seed: u64) -> PyResult<Py<PyDict>> {
    let report =
        gvplab::harness::oracle_lq::run_lq_oracle(instances, 1e-3, &RngStream::new(seed))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("pass", report.pass)?;
    d.set_item("max_abs_dev", report.max_abs_dev)?;
    Ok(d.into())
}

#[pymodule]
fn gvplab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Env>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(make_oracle_plan, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_blur, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_teleport, m)?)?;
    m.add_function(wrap_pyfunction!(corrupt_drift, m)?)?;
    m.add_function(wrap_pyfunction!(align_temporal, m)?)?;
    m.add_function(wrap_pyfunction!(solve_episode, m)?)?;
    m.add_function(wrap_pyfunction!(unipi_episode, m)?)?;
    m.add_function(wrap_pyfunction!(campaign_csv, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_lq, m)?)?;
    Ok(())
}
