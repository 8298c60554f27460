use std::path::Path;

use crate::data::{train_val_split, ReplayBuffer};
use crate::models::{Model, ModelTrainer, TrainerReport, TransitionRewardModel};
use crate::{Error, Result, SeededRng};

/// How a model is fit to a replay buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSettings {
    pub batch_size: usize,
    /// Fraction of rows held out for scoring; 0 scores on the training rows.
    pub validation_ratio: f64,
    pub num_epochs: usize,
    /// Epochs without improvement before stopping early; 0 disables.
    pub patience: usize,
    pub improvement_threshold: f64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            batch_size: 32,
            validation_ratio: 0.0,
            num_epochs: 50,
            patience: 5,
            improvement_threshold: 0.01,
            shuffle_each_epoch: true,
        }
    }
}

/// Fits `model` to everything in `buffer`: split, refit the input
/// normalizer on the whole buffer, bootstrap per member, train and pick
/// elites. With `save_dir`, writes `model.ckpt` and `trainer_report.txt`.
pub fn train_model_on_buffer(
    model: &mut TransitionRewardModel,
    trainer: &ModelTrainer,
    buffer: &ReplayBuffer,
    settings: &TrainingSettings,
    rng: &mut SeededRng,
    save_dir: Option<&Path>,
) -> Result<TrainerReport> {
    if buffer.is_empty() {
        return Err(Error::Empty("cannot train on an empty replay buffer".into()));
    }
    let (train, val) = train_val_split(
        buffer,
        settings.validation_ratio,
        settings.batch_size,
        settings.shuffle_each_epoch,
        rng,
    )?;
    model.update_normalizer(&buffer.all())?;
    let mut boot = train.bootstrap(model.ensemble_size(), rng)?;
    let report = trainer.train(model, &mut boot, val.as_ref(), settings.num_epochs, settings.patience)?;
    if let Some(dir) = save_dir {
        std::fs::create_dir_all(dir)?;
        model.save(dir.join("model.ckpt"))?;
        std::fs::write(dir.join("trainer_report.txt"), report.to_kv_string())?;
    }
    Ok(report)
}
