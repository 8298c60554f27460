//! Action selection: random exploration, the cross-entropy method, and
//! receding-horizon control over a trajectory evaluator.

mod agent;
mod cem;
mod mpc;

pub use agent::{Agent, RandomAgent};
pub use cem::{cem_optimize, write_trace_csv, CemConfig, CemIteration, CemOptions, CemResult, MIN_VARIANCE};
pub use mpc::{
    evaluate_action_sequences, ModelEnvEvaluator, MpcConfig, TrajectoryEvaluator, TrajectoryOptimizerAgent,
    TrueEnvEvaluator,
};
