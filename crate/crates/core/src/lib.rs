//! Repertoire-based online adaptation toolkit.
//!
//! The crate is organized around a two-phase workflow:
//!
//! 1. **Offline**: for every situation the agent might face (damage, floor
//!    friction, object shape), evolve a *repertoire* of elementary policies
//!    with CVT MAP-Elites ([`qd`]) against an analytic simulator
//!    ([`worldsim`]). A repertoire maps discretized task-space transitions to
//!    the policies that produce them ([`archive`]).
//! 2. **Online**: at every replanning step, pick the policy most likely to
//!    reach the current sub-goal ([`adapt`]). Each repertoire doubles as the
//!    prior mean of a Gaussian-process transformation model ([`gpmodel`])
//!    learned from the observations collected so far; repertoires compete
//!    through a UCB score over how well their predictions matched reality.
//!    Sub-goals come from an A* planner over a known obstacle grid ([`nav`]).

pub mod adapt;
pub mod archive;
pub mod error;
pub mod gpmodel;
pub mod nav;
pub mod qd;
pub mod types;
pub mod worldsim;

pub use adapt::{AdaptConfig, Mode, Observation, RepertoireStats, SelectionDiagnostics};
pub use archive::{InsertOutcome, Repertoire, RepertoireEntry, Tessellation};
pub use error::Error;
pub use gpmodel::{GpHyperparams, GpModel};
pub use nav::{GridMap, Path, Rect};
pub use qd::{MapElitesConfig, PerformanceFn};
pub use types::{PolicyParams, TaskPoint};
pub use worldsim::{AgentState, NominalMap, Situation, Task};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
