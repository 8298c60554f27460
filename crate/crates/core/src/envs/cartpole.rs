use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;

use super::{clip, Env, EnvSpec, EnvStep};
use crate::SeededRng;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
/// Half the pole length.
const LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * LENGTH;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;

pub const CARTPOLE_X_LIMIT: f64 = 2.4;
/// 12 degrees.
pub const CARTPOLE_THETA_LIMIT: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

fn terminal(state: &[f64]) -> bool {
    state[0].abs() > CARTPOLE_X_LIMIT || state[2].abs() > CARTPOLE_THETA_LIMIT
}

/// One explicit Euler step of the cart-pole with force `10 * clip(a, -1, 1)`.
/// State is `(x, x_dot, theta, theta_dot)`. Reward is 1 unless the new state
/// is terminal.
pub fn cartpole_step(state: [f64; 4], action: f64) -> ([f64; 4], f64, bool) {
    let [x, x_dot, theta, theta_dot] = state;
    let force = FORCE_MAG * clip(action, -1.0, 1.0);
    let (sin, cos) = theta.sin_cos();
    let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
    let theta_acc = (GRAVITY * sin - cos * temp) / (LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
    let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
    let next = [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ];
    let done = terminal(&next);
    (next, if done { 0.0 } else { 1.0 }, done)
}

pub fn cartpole_step_batch(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> (Array2<f64>, Array1<f64>, Vec<bool>) {
    let n = states.nrows();
    let mut next = Array2::zeros((n, 4));
    let mut rewards = Array1::zeros(n);
    let mut dones = Vec::with_capacity(n);
    for i in 0..n {
        let s = [states[[i, 0]], states[[i, 1]], states[[i, 2]], states[[i, 3]]];
        let (ns, r, d) = cartpole_step(s, actions[[i, 0]]);
        next.row_mut(i).assign(&Array1::from(ns.to_vec()));
        rewards[i] = r;
        dones.push(d);
    }
    (next, rewards, dones)
}

pub fn cartpole_termination(_action: ArrayView2<f64>, next_obs: ArrayView2<f64>) -> Vec<bool> {
    next_obs.rows().into_iter().map(|r| terminal(r.as_slice().unwrap_or(&r.to_vec()))).collect()
}

pub fn cartpole_reward(action: ArrayView2<f64>, next_obs: ArrayView2<f64>) -> Array1<f64> {
    cartpole_termination(action, next_obs)
        .into_iter()
        .map(|d| if d { 0.0 } else { 1.0 })
        .collect()
}

/// Continuous-action cart-pole balancing task.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
}

impl CartPole {
    pub fn new() -> Self {
        Self::with_trial_length(200)
    }

    pub fn with_trial_length(trial_length: usize) -> Self {
        Self {
            spec: EnvSpec {
                name: "cartpole_continuous",
                obs_dim: 4,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                trial_length,
                dt: TAU,
            },
            state: [0.0; 4],
        }
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut SeededRng) -> Vec<f64> {
        for v in &mut self.state {
            *v = rng.random_range(-0.05..0.05);
        }
        self.state.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> EnvStep {
        let (next, reward, done) = cartpole_step(self.state, action[0]);
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
        self.state.copy_from_slice(&state[..4]);
    }

    fn box_clone(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}
