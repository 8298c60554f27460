use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;

use super::read_float_csv;
use crate::envs::Env;
use crate::models::{Model, ModelEnv};
use crate::planning::Agent;
use crate::{Error, Result, SeededRng};

/// The true trajectory of an agent next to model predictions driven by the
/// same actions.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutComparison {
    /// `horizon × action_dim`.
    pub actions: Array2<f64>,
    /// `horizon × obs_dim`; row `t` is the observation after step `t + 1`.
    pub true_obs: Array2<f64>,
    /// One `horizon × obs_dim` trajectory per model sample.
    pub samples: Vec<Array2<f64>>,
}

impl RolloutComparison {
    pub fn horizon(&self) -> usize {
        self.true_obs.nrows()
    }

    pub fn header(num_samples: usize) -> String {
        let mut h = String::from("step,true");
        for i in 0..num_samples {
            let _ = write!(h, ",sample_{i}");
        }
        h
    }

    /// Time series for one observation dimension:
    /// `step,true,sample_0,…`, steps counted from 1.
    pub fn dim_csv(&self, dim: usize) -> String {
        let mut out = Self::header(self.samples.len());
        out.push('\n');
        for t in 0..self.horizon() {
            let _ = write!(out, "{},{}", t + 1, self.true_obs[[t, dim]]);
            for s in &self.samples {
                let _ = write!(out, ",{}", s[[t, dim]]);
            }
            out.push('\n');
        }
        out
    }

    /// Writes `dim_<i>.csv` per observation dimension and `actions.csv`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for d in 0..self.true_obs.ncols() {
            std::fs::write(dir.join(format!("dim_{d}.csv")), self.dim_csv(d))?;
        }
        let mut actions = String::from("step");
        for j in 0..self.actions.ncols() {
            let _ = write!(actions, ",action_{j}");
        }
        actions.push('\n');
        for (t, row) in self.actions.rows().into_iter().enumerate() {
            let _ = write!(actions, "{}", t + 1);
            for v in row {
                let _ = write!(actions, ",{v}");
            }
            actions.push('\n');
        }
        std::fs::write(dir.join("actions.csv"), actions)?;
        Ok(())
    }

    /// Parses one `dim_<i>.csv` into `(true series, per-sample series)`.
    pub fn parse_dim_csv(text: &str, num_samples: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let rows = read_float_csv(text, &Self::header(num_samples))?;
        let truth = rows.iter().map(|r| r[1]).collect();
        let samples = (0..num_samples).map(|s| rows.iter().map(|r| r[2 + s]).collect()).collect();
        Ok((truth, samples))
    }
}

/// Runs `agent` closed-loop on `env` from its current state for `horizon`
/// steps, then replays the executed actions open-loop through
/// `num_model_samples` model particles started at the same observation.
/// The true env keeps stepping even past a terminal state so both series
/// have `horizon` rows.
pub fn visualize_rollout<M: Model>(
    model_env: &ModelEnv<M>,
    env: &mut dyn Env,
    agent: &mut dyn Agent,
    horizon: usize,
    num_model_samples: usize,
    rng: &mut SeededRng,
) -> Result<RolloutComparison> {
    let spec = env.spec().clone();
    if horizon == 0 || horizon > spec.trial_length {
        return Err(Error::invalid(format!("horizon {horizon} must be in 1..={}", spec.trial_length)));
    }
    if num_model_samples == 0 {
        return Err(Error::invalid("need at least one model sample"));
    }
    let start = env.state();
    let mut obs = start.clone();
    let mut actions = Array2::zeros((horizon, spec.action_dim));
    let mut true_obs = Array2::zeros((horizon, spec.obs_dim));
    for t in 0..horizon {
        let a = agent.act(&obs, rng)?;
        if a.len() != spec.action_dim {
            return Err(Error::shape(format!("agent produced {} actions, env expects {}", a.len(), spec.action_dim)));
        }
        let step = env.step(&a);
        actions.row_mut(t).assign(&ndarray::ArrayView1::from(&a));
        true_obs.row_mut(t).assign(&ndarray::ArrayView1::from(&step.obs));
        obs = step.obs;
    }

    let init = Array2::from_shape_fn((num_model_samples, spec.obs_dim), |(_, j)| start[j]);
    let mut state = model_env.reset(init, rng)?;
    let mut samples = vec![Array2::zeros((horizon, spec.obs_dim)); num_model_samples];
    for t in 0..horizon {
        let act = Array2::from_shape_fn((num_model_samples, spec.action_dim), |(_, j)| actions[[t, j]]);
        let step = model_env.step(&mut state, act.view(), true, rng)?;
        for (s, sample) in samples.iter_mut().enumerate() {
            sample.row_mut(t).assign(&step.next_obs.row(s));
        }
    }
    Ok(RolloutComparison {
        actions,
        true_obs,
        samples,
    })
}
