use std::fmt::Write as _;
use std::path::Path;

use super::read_float_csv;
use crate::data::ReplayBuffer;
use crate::models::TransitionRewardModel;
use crate::{Error, Result};

pub const PAIRS_HEADER: &str = "predicted,target";
pub const SUMMARY_HEADER: &str = "dimension,count,mse,r2";

/// Predictions and targets for one target dimension, in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct DimPairs {
    pub predicted: Vec<f64>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DimSummary {
    pub dimension: usize,
    pub count: usize,
    pub mse: f64,
    /// `1 - SS_res / SS_tot`; for a constant target this is 1 when the fit
    /// is exact and `-inf` otherwise.
    pub r2: f64,
}

impl DimPairs {
    /// Mean squared error, accumulated in row order.
    pub fn mse(&self) -> f64 {
        let mut s = 0.0;
        for (p, t) in self.predicted.iter().zip(&self.target) {
            s += (p - t) * (p - t);
        }
        s / self.predicted.len() as f64
    }

    pub fn r2(&self) -> f64 {
        let n = self.target.len() as f64;
        let mean = self.target.iter().sum::<f64>() / n;
        let mut ss_res = 0.0;
        let mut ss_tot = 0.0;
        for (p, t) in self.predicted.iter().zip(&self.target) {
            ss_res += (p - t) * (p - t);
            ss_tot += (t - mean) * (t - mean);
        }
        if ss_tot == 0.0 {
            if ss_res == 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            1.0 - ss_res / ss_tot
        }
    }
}

/// Predicted-vs-target pairs for every target dimension (observation
/// deltas or next observations, then the reward when it is learned).
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationTable {
    pub dims: Vec<DimPairs>,
}

impl EvaluationTable {
    pub fn summary(&self) -> Vec<DimSummary> {
        self.dims
            .iter()
            .enumerate()
            .map(|(dimension, d)| DimSummary {
                dimension,
                count: d.target.len(),
                mse: d.mse(),
                r2: d.r2(),
            })
            .collect()
    }

    pub fn pairs_csv(&self, dim: usize) -> String {
        let d = &self.dims[dim];
        let mut out = format!("{PAIRS_HEADER}\n");
        for (p, t) in d.predicted.iter().zip(&d.target) {
            let _ = writeln!(out, "{p},{t}");
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for s in self.summary() {
            let _ = writeln!(out, "{},{},{},{}", s.dimension, s.count, s.mse, s.r2);
        }
        out
    }

    /// Writes `dim_<i>.csv` per dimension and `summary.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for i in 0..self.dims.len() {
            std::fs::write(dir.join(format!("dim_{i}.csv")), self.pairs_csv(i))?;
        }
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        Ok(())
    }

    pub fn parse_pairs(text: &str) -> Result<DimPairs> {
        let rows = read_float_csv(text, PAIRS_HEADER)?;
        Ok(DimPairs {
            predicted: rows.iter().map(|r| r[0]).collect(),
            target: rows.iter().map(|r| r[1]).collect(),
        })
    }

    pub fn parse_summary(text: &str) -> Result<Vec<DimSummary>> {
        read_float_csv(text, SUMMARY_HEADER)?
            .into_iter()
            .map(|r| {
                Ok(DimSummary {
                    dimension: r[0] as usize,
                    count: r[1] as usize,
                    mse: r[2],
                    r2: r[3],
                })
            })
            .collect()
    }

    /// Loads the pair files written by [`write_dir`](Self::write_dir).
    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let summary = Self::parse_summary(&std::fs::read_to_string(dir.join("summary.csv"))?)?;
        let dims = (0..summary.len())
            .map(|i| Self::parse_pairs(&std::fs::read_to_string(dir.join(format!("dim_{i}.csv")))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dims })
    }
}

/// Compares the model's elite-mean predictions with the dataset's targets.
pub fn dataset_evaluate(model: &TransitionRewardModel, dataset: &ReplayBuffer) -> Result<EvaluationTable> {
    if dataset.is_empty() {
        return Err(Error::Empty("dataset has no transitions".into()));
    }
    if dataset.obs_dim() != model.obs_dim() || dataset.action_dim() != model.action_dim() {
        return Err(Error::shape(format!(
            "model expects (obs {}, action {}) but dataset has (obs {}, action {})",
            model.obs_dim(),
            model.action_dim(),
            dataset.obs_dim(),
            dataset.action_dim()
        )));
    }
    let batch = dataset.all();
    let (_, target) = model.process_batch(&batch)?;
    let predicted = model.predict_mean(batch.obs.view(), batch.action.view())?;
    let dims = (0..target.ncols())
        .map(|j| DimPairs {
            predicted: predicted.column(j).to_vec(),
            target: target.column(j).to_vec(),
        })
        .collect();
    Ok(EvaluationTable { dims })
}
