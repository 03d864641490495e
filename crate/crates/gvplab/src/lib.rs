//! gvplab: a desk-scale planning laboratory that grounds corrupted or
//! infeasible guidance trajectories into dynamically feasible action
//! sequences via augmented-Lagrangian latent collocation under an
//! action-conditioned world model, with sampling and gradient shooting
//! baselines and a deterministic evaluation harness.

pub mod baselines;
pub mod collocation;
pub mod envs;
pub mod error;
pub mod executor;
pub mod harness;
pub mod opt;
pub mod rng;
pub mod types;
pub mod videoplan;
pub mod worldmodel;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use types::{Action, ActionBounds, LatentState, Observation, WeightConfig};
