//! Synthetic partially observable environments with controllable memory demands, plus
//! exact finite-process oracles for checking their structural properties.
//!
//! Environments are described by an [`EnvSpec`], built with [`make_env`] and driven
//! through the [`Environment`] trait. The [`finite`] module holds exact rational
//! tabular processes, and [`verify`] the property checks built on them.

#![allow(clippy::type_complexity)]

pub mod agents;
pub mod env;
pub mod error;
pub mod finite;
pub mod linproc;
pub mod rng;
pub mod spec;
pub mod trajectory;
pub mod verify;
pub mod wrappers;

pub use agents::{Agent, ClairvoyantAgent, PolicyKind, ScriptedAgent, UniformRandomAgent};
pub use env::{make_env, make_tabular_env, rollout, BoxedEnv, Environment, StepOutcome};
pub use error::{Error, Result};
pub use finite::{equivalent_hdp, FiniteHdp, FinitePomdp, Process, Q};
pub use rng::RngStream;
pub use spec::{ConvMode, EnvSpec, Family, Sign, WrapperSpec};
pub use trajectory::{Step, Trajectory};
