//! Data collection, model training on buffers, and the PETS loop.

mod curve;
mod pets;
mod rollout;
mod training;

pub use curve::{CurveRow, LearningCurve, RESULTS_HEADER};
pub use pets::{build_model, pets_run, pets_run_with_observer, ModelSettings, PetsConfig, PetsOutcome};
pub use rollout::rollout_agent_trajectories;
pub use training::{train_model_on_buffer, TrainingSettings};
