//! Ground-truth environments and the reward/termination function registry
//! used by model-backed simulation.

mod cartpole;
mod pendulum;

pub use cartpole::{cartpole_reward, cartpole_step, cartpole_step_batch, cartpole_termination, CartPole, CARTPOLE_THETA_LIMIT, CARTPOLE_X_LIMIT};
pub use pendulum::{angle_normalize, pendulum_reward, pendulum_step, pendulum_step_batch, Pendulum};

use ndarray::{Array1, ArrayView2};

use crate::{Error, Result, SeededRng};

/// `(action batch, next_obs batch) -> terminal flags`.
pub type TerminationFn = fn(ArrayView2<f64>, ArrayView2<f64>) -> Vec<bool>;
/// `(action batch, next_obs batch) -> rewards`.
pub type RewardFn = fn(ArrayView2<f64>, ArrayView2<f64>) -> Array1<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Maximum steps per episode.
    pub trial_length: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// A single-instance environment whose full state is its observation, so it
/// can be cloned and restored for planning against the true dynamics.
pub trait Env {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> EnvStep;
    fn state(&self) -> Vec<f64>;
    fn set_state(&mut self, state: &[f64]);
    fn box_clone(&self) -> Box<dyn Env>;
}

impl Clone for Box<dyn Env> {
    fn clone(&self) -> Self {
        self.box_clone()
    }
}

pub fn no_termination(_action: ArrayView2<f64>, next_obs: ArrayView2<f64>) -> Vec<bool> {
    vec![false; next_obs.nrows()]
}

pub const ENV_NAMES: &[&str] = &["cartpole_continuous", "pendulum"];
pub const TERMINATION_NAMES: &[&str] = &["no_termination", "cartpole"];
pub const REWARD_NAMES: &[&str] = &["cartpole", "pendulum"];

pub fn termination_fn(name: &str) -> Result<TerminationFn> {
    match name {
        "no_termination" => Ok(no_termination),
        "cartpole" => Ok(cartpole_termination),
        other => Err(Error::UnknownName {
            kind: "termination function",
            name: other.to_string(),
            available: TERMINATION_NAMES.join(", "),
        }),
    }
}

pub fn reward_fn(name: &str) -> Result<RewardFn> {
    match name {
        "cartpole" => Ok(cartpole_reward),
        "pendulum" => Ok(pendulum_reward),
        other => Err(Error::UnknownName {
            kind: "reward function",
            name: other.to_string(),
            available: REWARD_NAMES.join(", "),
        }),
    }
}

/// Builds a registered environment with its default trial length.
pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    make_env_with_trial_length(name, None)
}

/// Builds a registered environment, optionally overriding its trial length.
pub fn make_env_with_trial_length(name: &str, trial_length: Option<usize>) -> Result<Box<dyn Env>> {
    match name {
        "cartpole_continuous" => Ok(Box::new(trial_length.map_or_else(CartPole::new, CartPole::with_trial_length))),
        "pendulum" => Ok(Box::new(trial_length.map_or_else(Pendulum::new, Pendulum::with_trial_length))),
        other => Err(Error::UnknownName {
            kind: "environment",
            name: other.to_string(),
            available: ENV_NAMES.join(", "),
        }),
    }
}

/// Default `(termination, reward)` function names for a registered env.
pub fn default_fn_names(env: &str) -> Result<(&'static str, &'static str)> {
    match env {
        "cartpole_continuous" => Ok(("cartpole", "cartpole")),
        "pendulum" => Ok(("no_termination", "pendulum")),
        other => Err(Error::UnknownName {
            kind: "environment",
            name: other.to_string(),
            available: ENV_NAMES.join(", "),
        }),
    }
}

pub(crate) fn clip(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}
