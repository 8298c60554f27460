use ndarray::{Array1, Array2, ArrayView2};

use super::{Model, ModelState, TransitionRewardModel};
use crate::envs::{RewardFn, TerminationFn};
use crate::{Error, Result, SeededRng};

/// Batched environment simulated by a learned model.
#[derive(Debug, Clone)]
pub struct ModelEnv<M: Model = TransitionRewardModel> {
    model: M,
    termination_fn: TerminationFn,
    reward_fn: Option<RewardFn>,
}

/// Simulation state for `P` particles.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEnvState {
    pub obs: Array2<f64>,
    pub model_state: ModelState,
    pub done: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelStep {
    pub next_obs: Array2<f64>,
    pub rewards: Array1<f64>,
    pub dones: Vec<bool>,
}

impl<M: Model> ModelEnv<M> {
    /// `reward_fn`, when given, takes precedence over learned rewards.
    pub fn new(model: M, termination_fn: TerminationFn, reward_fn: Option<RewardFn>) -> Self {
        Self {
            model,
            termination_fn,
            reward_fn,
        }
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    pub fn into_model(self) -> M {
        self.model
    }

    pub fn reset(&self, initial_obs: Array2<f64>, rng: &mut SeededRng) -> Result<ModelEnvState> {
        if initial_obs.nrows() == 0 {
            return Err(Error::Empty("model env reset with zero particles".into()));
        }
        let model_state = self.model.reset(initial_obs.view(), rng)?;
        let done = vec![false; initial_obs.nrows()];
        Ok(ModelEnvState {
            obs: initial_obs,
            model_state,
            done,
        })
    }

    /// Advances every particle. Particles that were already done keep their
    /// observation and earn zero reward.
    pub fn step(
        &self,
        state: &mut ModelEnvState,
        actions: ArrayView2<f64>,
        sample: bool,
        rng: &mut SeededRng,
    ) -> Result<ModelStep> {
        if actions.nrows() != state.obs.nrows() {
            return Err(Error::shape(format!(
                "{} actions for {} particles",
                actions.nrows(),
                state.obs.nrows()
            )));
        }
        let (mut next_obs, learned) = self.model.sample(state.obs.view(), actions, &state.model_state, rng, sample)?;
        let mut rewards = match (self.reward_fn, learned) {
            (Some(f), _) => f(actions, next_obs.view()),
            (None, Some(r)) => r,
            (None, None) => {
                return Err(Error::invalid(
                    "model env needs a reward function when rewards are not learned",
                ))
            }
        };
        let term = (self.termination_fn)(actions, next_obs.view());
        let mut dones = Vec::with_capacity(term.len());
        for (i, t) in term.into_iter().enumerate() {
            if state.done[i] {
                next_obs.row_mut(i).assign(&state.obs.row(i));
                rewards[i] = 0.0;
                dones.push(true);
            } else {
                dones.push(t);
            }
        }
        state.obs = next_obs.clone();
        state.done = dones.clone();
        Ok(ModelStep {
            next_obs,
            rewards,
            dones,
        })
    }
}
