//! Safe predefined-time stabilization of affine zero-sum differential games.
//!
//! The crate covers the analytic side (game model, closed-form Nash
//! strategies, exact value functions of two built-in examples, the
//! predefined-time rate constant) and the learning side (a barrier-factored
//! MLP value surrogate trained on the steady-state HJI residual under a
//! decrease constraint with an augmented Lagrangian), plus a closed-loop
//! simulator and evaluation metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(a < b)` also rejects NaN

pub mod barrier;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod instances;
pub mod model;
pub mod net;
pub mod optim;
pub mod ptp;
pub mod simulator;
pub mod special;
pub mod strategies;
pub mod trainer;
pub mod verify;

pub use barrier::{ExactValue, ValueFunction};
pub use checkpoint::Checkpoint;
pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use instances::{ExampleKind, StrategyParams};
pub use model::{GameModel, LocalGame, StateVec};
pub use net::{Activation, MlpConfig, SurrogateValue};
pub use ptp::{gamma_constant, PredefinedTimeParams};
pub use simulator::{integrate, SimConfig, Trajectory};
pub use strategies::{closed_form_pair, NashFeedback, StrategyPair};
pub use trainer::{train, TrainConfig, TrainingReport};
