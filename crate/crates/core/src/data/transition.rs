use ndarray::{Array1, Array2, Axis};

use crate::{Error, Result};

/// A single environment step `(obs, action, next_obs, reward, done)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

impl Transition {
    pub fn new(obs: Vec<f64>, action: Vec<f64>, next_obs: Vec<f64>, reward: f64, done: bool) -> Self {
        Self {
            obs,
            action,
            next_obs,
            reward,
            done,
        }
    }

    /// Checks dimensional consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.obs.is_empty() || self.action.is_empty() {
            return Err(Error::InvalidTransition(
                "obs and action must be non-empty".into(),
            ));
        }
        if self.obs.len() != self.next_obs.len() {
            return Err(Error::InvalidTransition(format!(
                "obs has length {} but next_obs has length {}",
                self.obs.len(),
                self.next_obs.len()
            )));
        }
        let fields: [(&str, &[f64]); 4] = [
            ("obs", &self.obs),
            ("action", &self.action),
            ("next_obs", &self.next_obs),
            ("reward", std::slice::from_ref(&self.reward)),
        ];
        for (name, values) in fields {
            if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidTransition(format!(
                    "{name}[{pos}] is not finite ({})",
                    values[pos]
                )));
            }
        }
        Ok(())
    }
}

/// Columnar batch of transitions. Row `i` of every field belongs to the same
/// transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub reward: Array1<f64>,
    pub done: Vec<bool>,
}

impl TransitionBatch {
    pub fn new(
        obs: Array2<f64>,
        action: Array2<f64>,
        next_obs: Array2<f64>,
        reward: Array1<f64>,
        done: Vec<bool>,
    ) -> Result<Self> {
        let n = obs.nrows();
        if action.nrows() != n || next_obs.nrows() != n || reward.len() != n || done.len() != n {
            return Err(Error::shape(format!(
                "batch fields disagree on row count: obs {}, action {}, next_obs {}, reward {}, done {}",
                n,
                action.nrows(),
                next_obs.nrows(),
                reward.len(),
                done.len()
            )));
        }
        if obs.ncols() != next_obs.ncols() {
            return Err(Error::shape(format!(
                "obs has {} columns, next_obs has {}",
                obs.ncols(),
                next_obs.ncols()
            )));
        }
        Ok(Self {
            obs,
            action,
            next_obs,
            reward,
            done,
        })
    }

    pub fn from_transitions(items: &[Transition]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Empty("no transitions to batch".into()))?;
        let (s, a) = (first.obs.len(), first.action.len());
        let n = items.len();
        let mut obs = Array2::zeros((n, s));
        let mut action = Array2::zeros((n, a));
        let mut next_obs = Array2::zeros((n, s));
        let mut reward = Array1::zeros(n);
        let mut done = Vec::with_capacity(n);
        for (i, t) in items.iter().enumerate() {
            t.validate()?;
            if t.obs.len() != s || t.action.len() != a {
                return Err(Error::shape(format!("transition {i} has inconsistent dimensions")));
            }
            obs.row_mut(i).assign(&Array1::from(t.obs.clone()));
            action.row_mut(i).assign(&Array1::from(t.action.clone()));
            next_obs.row_mut(i).assign(&Array1::from(t.next_obs.clone()));
            reward[i] = t.reward;
            done.push(t.done);
        }
        Self::new(obs, action, next_obs, reward, done)
    }

    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.action.ncols()
    }

    pub fn get(&self, i: usize) -> Transition {
        Transition {
            obs: self.obs.row(i).to_vec(),
            action: self.action.row(i).to_vec(),
            next_obs: self.next_obs.row(i).to_vec(),
            reward: self.reward[i],
            done: self.done[i],
        }
    }

    /// Gathers the given rows (repeats allowed) into a new batch.
    pub fn select(&self, indices: &[usize]) -> TransitionBatch {
        TransitionBatch {
            obs: self.obs.select(Axis(0), indices),
            action: self.action.select(Axis(0), indices),
            next_obs: self.next_obs.select(Axis(0), indices),
            reward: self.reward.select(Axis(0), indices),
            done: indices.iter().map(|&i| self.done[i]).collect(),
        }
    }
}

/// Batch with a leading ensemble axis: `members[e]` holds the rows that
/// ensemble member `e` trains on. All members carry the same row count.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleBatch {
    pub members: Vec<TransitionBatch>,
}

impl EnsembleBatch {
    pub fn new(members: Vec<TransitionBatch>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Empty("ensemble batch needs at least one member".into()))?;
        let rows = first.len();
        if members.iter().any(|m| m.len() != rows) {
            return Err(Error::shape("ensemble members have different batch sizes"));
        }
        Ok(Self { members })
    }

    /// The same rows for every member.
    pub fn broadcast(batch: &TransitionBatch, ensemble_size: usize) -> Self {
        Self {
            members: vec![batch.clone(); ensemble_size],
        }
    }

    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    pub fn batch_size(&self) -> usize {
        self.members[0].len()
    }
}
