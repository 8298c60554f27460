//! Dynamics models: the [`Model`] interface, Gaussian MLP ensembles, the
//! transition/reward wrapper, the supervised trainer and [`ModelEnv`].

mod gaussian_mlp;
mod loss;
mod model_env;
mod trainer;
mod wrapper;

pub use gaussian_mlp::{EnsembleSnapshot, GaussianMlpConfig, GaussianMlpEnsemble, MemberOutput};
pub use loss::{gaussian_nll_loss, mse_loss};
pub use model_env::{ModelEnv, ModelEnvState, ModelStep};
pub use trainer::{rank_elites, ModelTrainer, TrainerReport};
pub use wrapper::{ModelState, Propagation, TransitionRewardModel};

use ndarray::{Array1, Array2, ArrayView2};

use crate::data::{EnsembleBatch, TransitionBatch};
use crate::{Result, SeededRng};

/// Anything the trainer can fit and [`ModelEnv`] can simulate.
pub trait Model {
    type Snapshot: Clone;

    fn ensemble_size(&self) -> usize;

    /// Per-member training loss on the member's own rows, without updating.
    fn loss(&self, batch: &EnsembleBatch) -> Result<Vec<f64>>;

    /// One gradient step per member on its own rows; returns the pre-update
    /// member losses.
    fn update(&mut self, batch: &EnsembleBatch) -> Result<Vec<f64>>;

    /// Per-member, per-target-dimension score (lower is better). Every member
    /// is scored on the same rows.
    fn eval_score(&self, batch: &TransitionBatch) -> Result<Array2<f64>>;

    fn elites(&self) -> &[usize];
    fn set_elites(&mut self, elites: Vec<usize>) -> Result<()>;
    /// How many members the trainer should keep as elites.
    fn num_elites(&self) -> usize;

    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: &Self::Snapshot);

    /// Initializes per-trajectory state for a batch of start observations.
    fn reset(&self, obs: ArrayView2<f64>, rng: &mut SeededRng) -> Result<ModelState>;

    /// Next observations (and learned rewards, if any) for a batch.
    fn sample(
        &self,
        obs: ArrayView2<f64>,
        action: ArrayView2<f64>,
        state: &ModelState,
        rng: &mut SeededRng,
        sample: bool,
    ) -> Result<(Array2<f64>, Option<Array1<f64>>)>;
}
