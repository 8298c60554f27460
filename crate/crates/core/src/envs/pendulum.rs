use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::{clip, Env, EnvSpec, EnvStep};
use crate::SeededRng;

const MAX_SPEED: f64 = 8.0;
const MAX_TORQUE: f64 = 2.0;
const DT: f64 = 0.05;
const G: f64 = 10.0;
const M: f64 = 1.0;
const L: f64 = 1.0;

/// Wraps an angle into `[-π, π)`.
pub fn angle_normalize(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

fn cost(theta: f64, theta_dot: f64, torque: f64) -> f64 {
    let th = angle_normalize(theta);
    th * th + 0.1 * theta_dot * theta_dot + 0.001 * torque * torque
}

/// One explicit Euler step of the torque-limited pendulum; `theta = 0` is
/// upright. The reward is the negative cost of the pre-step state and the
/// clipped torque. Never terminates.
pub fn pendulum_step(state: [f64; 2], action: f64) -> ([f64; 2], f64, bool) {
    let [theta, theta_dot] = state;
    let u = clip(action, -MAX_TORQUE, MAX_TORQUE);
    let reward = -cost(theta, theta_dot, u);
    let acc = 3.0 * G / (2.0 * L) * theta.sin() + 3.0 / (M * L * L) * u;
    let next_dot = clip(theta_dot + acc * DT, -MAX_SPEED, MAX_SPEED);
    let next_theta = theta + theta_dot * DT;
    ([next_theta, next_dot], reward, false)
}

pub fn pendulum_step_batch(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, Vec<bool>) {
    let n = states.nrows();
    let mut next = Array2::zeros((n, 2));
    let mut rewards = Array1::zeros(n);
    for i in 0..n {
        let (ns, r, _) = pendulum_step([states[[i, 0]], states[[i, 1]]], actions[[i, 0]]);
        next[[i, 0]] = ns[0];
        next[[i, 1]] = ns[1];
        rewards[i] = r;
    }
    (next, rewards, vec![false; n])
}

/// Reward evaluated on the predicted next state, for model-based planning.
pub fn pendulum_reward(action: ArrayView2<f64>, next_obs: ArrayView2<f64>) -> Array1<f64> {
    (0..next_obs.nrows())
        .map(|i| {
            let u = clip(action[[i, 0]], -MAX_TORQUE, MAX_TORQUE);
            -cost(next_obs[[i, 0]], next_obs[[i, 1]], u)
        })
        .collect()
}

/// Pendulum swing-up task.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    state: [f64; 2],
}

impl Pendulum {
    pub fn new() -> Self {
        Self::with_trial_length(200)
    }

    pub fn with_trial_length(trial_length: usize) -> Self {
        Self {
            spec: EnvSpec {
                name: "pendulum",
                obs_dim: 2,
                action_dim: 1,
                action_low: vec![-MAX_TORQUE],
                action_high: vec![MAX_TORQUE],
                trial_length,
                dt: DT,
            },
            state: [PI, 0.0],
        }
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        self.state = [rng.random_range(-PI..PI), rng.random_range(-1.0..1.0)];
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let (next, reward, done) = pendulum_step(self.state, action[0]);
        self.state = next;
        EnvStep {
            obs: next.to_vec(),
            reward,
            done,
        }
    }

    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }

    fn set_state(&mut self, state: &[f64]) {
        self.state.copy_from_slice(&state[..2]);
    }

    fn box_clone(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}
