//! Transition storage, batching, iteration, bootstrapping and input
//! normalization.

mod buffer;
mod iter;
mod normalizer;
mod transition;

pub use buffer::ReplayBuffer;
pub use iter::{train_val_split, BootstrapIterator, TransitionIterator};
pub use normalizer::{Normalizer, STD_FLOOR};
pub use transition::{EnsembleBatch, Transition, TransitionBatch};
