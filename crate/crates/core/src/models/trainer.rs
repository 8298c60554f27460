use std::fmt::Write as _;

use ndarray::Array2;

use super::Model;
use crate::data::{BootstrapIterator, TransitionIterator};
use crate::{Error, Result};

/// Indices of the `k` lowest scores, best first. Ties keep index order.
pub fn rank_elites(member_scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..member_scores.len()).collect();
    order.sort_by(|&a, &b| member_scores[a].total_cmp(&member_scores[b]));
    order.truncate(k);
    order
}

fn mean_over_dims(scores: &Array2<f64>) -> Vec<f64> {
    scores.rows().into_iter().map(|r| r.mean().unwrap_or(f64::NAN)).collect()
}

/// What happened during one [`ModelTrainer::train`] call.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainerReport {
    /// Mean member loss per epoch.
    pub train_losses: Vec<f64>,
    /// Per-epoch, per-member evaluation score (validation rows when present,
    /// otherwise the training rows).
    pub eval_scores: Vec<Vec<f64>>,
    /// 1-based epoch whose weights were kept, if any epoch improved.
    pub best_epoch: Option<usize>,
    /// Mean elite score at the kept epoch.
    pub best_score: f64,
    /// `(epoch, mean elite score)` at each snapshot; scores never increase.
    pub snapshots: Vec<(usize, f64)>,
    pub elites: Vec<usize>,
    pub epochs_run: usize,
    pub used_validation: bool,
}

impl TrainerReport {
    /// `key=value` lines; list values are comma separated.
    pub fn to_kv_string(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "epochs_run={}", self.epochs_run);
        let _ = writeln!(
            out,
            "best_epoch={}",
            self.best_epoch.map_or_else(|| "none".to_string(), |e| e.to_string())
        );
        let _ = writeln!(out, "best_score={}", self.best_score);
        let _ = writeln!(out, "used_validation={}", self.used_validation);
        let elites: Vec<String> = self.elites.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "elites={}", elites.join(","));
        let _ = writeln!(out, "train_losses={}", join(&self.train_losses));
        for (i, s) in self.eval_scores.iter().enumerate() {
            let _ = writeln!(out, "eval_scores.{}={}", i + 1, join(s));
        }
        let snaps: Vec<String> = self.snapshots.iter().map(|(e, s)| format!("{e}:{s}")).collect();
        let _ = writeln!(out, "snapshots={}", snaps.join(","));
        out
    }
}

/// Supervised loop that keeps the best weights seen and picks elites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTrainer {
    /// Minimum relative drop of the mean elite score that counts as an
    /// improvement.
    pub improvement_threshold: f64,
}

impl Default for ModelTrainer {
    fn default() -> Self {
        Self {
            improvement_threshold: 0.01,
        }
    }
}

impl ModelTrainer {
    pub fn new(improvement_threshold: f64) -> Self {
        Self { improvement_threshold }
    }

    /// Runs up to `num_epochs` epochs of ensemble updates. After each epoch
    /// the model is scored on `val` (or on the un-resampled training rows);
    /// weights are snapshotted whenever the mean elite score improves by more
    /// than the threshold, and training stops after `patience` epochs without
    /// improvement (`0` disables early stopping). The best weights are
    /// restored and elites re-ranked from a final evaluation.
    pub fn train<M: Model>(
        &self,
        model: &mut M,
        train: &mut BootstrapIterator,
        val: Option<&TransitionIterator>,
        num_epochs: usize,
        patience: usize,
    ) -> Result<TrainerReport> {
        if train.ensemble_size() != model.ensemble_size() {
            return Err(Error::shape(format!(
                "bootstrap iterator has {} members, model has {}",
                train.ensemble_size(),
                model.ensemble_size()
            )));
        }
        let eval_batch = match val {
            Some(v) => v.full_batch(),
            None => train.base_batch(),
        };
        let k = model.num_elites().min(model.ensemble_size());
        let mut report = TrainerReport {
            best_score: f64::INFINITY,
            used_validation: val.is_some(),
            ..Default::default()
        };
        let mut best = None;
        let mut since_improvement = 0;

        for epoch in 1..=num_epochs {
            let mut total = 0.0;
            let mut count = 0usize;
            for batch in train.epoch() {
                let losses = model.update(&batch).map_err(|e| diverged(e, epoch, &report))?;
                total += losses.iter().sum::<f64>();
                count += losses.len();
            }
            let epoch_loss = total / count as f64;
            report.epochs_run = epoch;
            report.train_losses.push(epoch_loss);
            if !epoch_loss.is_finite() {
                return Err(diverged(
                    Error::NonFinite(format!("epoch loss {epoch_loss}")),
                    epoch,
                    &report,
                ));
            }

            let scores = mean_over_dims(&model.eval_score(&eval_batch)?);
            let elite_idx = rank_elites(&scores, k);
            let elite_score = elite_idx.iter().map(|&i| scores[i]).sum::<f64>() / k as f64;
            report.eval_scores.push(scores);
            if !elite_score.is_finite() {
                return Err(diverged(
                    Error::NonFinite(format!("evaluation score {elite_score}")),
                    epoch,
                    &report,
                ));
            }

            let improved = if report.best_score.is_finite() {
                (report.best_score - elite_score) / report.best_score.abs() > self.improvement_threshold
            } else {
                true
            };
            if improved {
                best = Some(model.snapshot());
                report.best_score = elite_score;
                report.best_epoch = Some(epoch);
                report.snapshots.push((epoch, elite_score));
                since_improvement = 0;
            } else {
                since_improvement += 1;
                if patience > 0 && since_improvement >= patience {
                    break;
                }
            }
        }

        if let Some(snapshot) = &best {
            model.restore(snapshot);
        }
        let scores = mean_over_dims(&model.eval_score(&eval_batch)?);
        report.elites = rank_elites(&scores, k);
        model.set_elites(report.elites.clone())?;
        Ok(report)
    }
}

fn diverged(err: Error, epoch: usize, report: &TrainerReport) -> Error {
    Error::Divergence {
        message: format!("epoch {epoch}: {err}"),
        report: Some(Box::new(report.clone())),
    }
}
