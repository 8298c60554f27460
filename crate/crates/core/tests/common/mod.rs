//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use mbrl::algorithms::{build_model, ModelSettings};
use mbrl::data::{ReplayBuffer, Transition};
use mbrl::models::{Propagation, TransitionRewardModel};
use mbrl::{seeded_rng, SeededRng};
use rand::Rng;

pub fn settings(ensemble_size: usize, num_elites: usize, deterministic: bool) -> ModelSettings {
    ModelSettings {
        ensemble_size,
        num_elites,
        hidden_size: 16,
        num_layers: 3,
        deterministic,
        ..ModelSettings::default()
    }
}

pub fn small_model(
    obs_dim: usize,
    action_dim: usize,
    ensemble_size: usize,
    num_elites: usize,
    deterministic: bool,
    learned_rewards: bool,
    seed: u64,
) -> TransitionRewardModel {
    let mut rng = seeded_rng(seed);
    build_model(
        &settings(ensemble_size, num_elites, deterministic),
        obs_dim,
        action_dim,
        learned_rewards,
        true,
        true,
        &mut rng,
    )
    .unwrap()
}

pub fn with_propagation(mut model: TransitionRewardModel, p: Propagation) -> TransitionRewardModel {
    model.set_propagation(p);
    model
}

/// `n` transitions of `s' = s + 0.5 a + noise·N(0,1)` with 2-d observations and
/// 1-d actions, reward `-(s'_0)^2`.
pub fn linear_buffer(n: usize, noise: f64, rng: &mut SeededRng) -> ReplayBuffer {
    let mut buf = ReplayBuffer::new(n, 2, 1).unwrap();
    for _ in 0..n {
        let s = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let a = vec![rng.random_range(-1.0..1.0)];
        let mut z = || -> f64 { rng.sample::<f64, _>(rand_distr::StandardNormal) * noise };
        let next = vec![s[0] + 0.5 * a[0] + z(), s[1] - 0.25 * a[0] + z()];
        let r = -next[0] * next[0];
        buf.add(&Transition::new(s, a, next, r, false)).unwrap();
    }
    buf
}

/// Known-dynamics double integrator `x' = x + dt·v`, `v' = v + dt·u`, used
/// where a planner needs an exact model.
#[derive(Debug, Clone, Copy)]
pub struct DoubleIntegrator {
    pub dt: f64,
}

impl DoubleIntegrator {
    pub fn step(&self, s: [f64; 2], u: f64) -> [f64; 2] {
        [s[0] + self.dt * s[1], s[1] + self.dt * u]
    }
}

impl mbrl::models::Model for DoubleIntegrator {
    type Snapshot = ();

    fn ensemble_size(&self) -> usize {
        1
    }
    fn loss(&self, _: &mbrl::data::EnsembleBatch) -> mbrl::Result<Vec<f64>> {
        Ok(vec![0.0])
    }
    fn update(&mut self, _: &mbrl::data::EnsembleBatch) -> mbrl::Result<Vec<f64>> {
        Ok(vec![0.0])
    }
    fn eval_score(&self, b: &mbrl::data::TransitionBatch) -> mbrl::Result<ndarray::Array2<f64>> {
        Ok(ndarray::Array2::zeros((1, b.obs_dim())))
    }
    fn elites(&self) -> &[usize] {
        &[0]
    }
    fn set_elites(&mut self, _: Vec<usize>) -> mbrl::Result<()> {
        Ok(())
    }
    fn num_elites(&self) -> usize {
        1
    }
    fn snapshot(&self) {}
    fn restore(&mut self, _: &()) {}
    fn reset(&self, obs: ndarray::ArrayView2<f64>, _: &mut SeededRng) -> mbrl::Result<mbrl::models::ModelState> {
        Ok(mbrl::models::ModelState {
            assignment: vec![0; obs.nrows()],
        })
    }
    fn sample(
        &self,
        obs: ndarray::ArrayView2<f64>,
        action: ndarray::ArrayView2<f64>,
        _: &mbrl::models::ModelState,
        _: &mut SeededRng,
        _: bool,
    ) -> mbrl::Result<(ndarray::Array2<f64>, Option<ndarray::Array1<f64>>)> {
        let next = ndarray::Array2::from_shape_fn((obs.nrows(), 2), |(i, j)| {
            self.step([obs[[i, 0]], obs[[i, 1]]], action[[i, 0]])[j]
        });
        Ok((next, None))
    }
}

pub const QUADRATIC_ACTION_WEIGHT: f64 = 0.1;

/// `-(x'^2 + v'^2 + 0.1 u^2)`.
pub fn quadratic_reward(action: ndarray::ArrayView2<f64>, next: ndarray::ArrayView2<f64>) -> ndarray::Array1<f64> {
    ndarray::Array1::from_shape_fn(next.nrows(), |i| {
        -(next[[i, 0]].powi(2) + next[[i, 1]].powi(2) + QUADRATIC_ACTION_WEIGHT * action[[i, 0]].powi(2))
    })
}

/// Ends an episode once the position leaves `[-2, 2]`.
pub fn leaves_track(_action: ndarray::ArrayView2<f64>, next: ndarray::ArrayView2<f64>) -> Vec<bool> {
    next.rows().into_iter().map(|r| r[0].abs() > 2.0).collect()
}

/// Returns of every sequence rolled out by hand: rewards stop accruing after
/// the first terminal step.
pub fn unrolled_returns(model: &DoubleIntegrator, start: [f64; 2], sequences: &ndarray::Array3<f64>) -> Vec<f64> {
    let (n, h, _) = sequences.dim();
    (0..n)
        .map(|i| {
            let mut s = start;
            let mut total = 0.0;
            for t in 0..h {
                let u = sequences[[i, t, 0]];
                s = model.step(s, u);
                total += -(s[0].powi(2) + s[1].powi(2) + QUADRATIC_ACTION_WEIGHT * u.powi(2));
                if s[0].abs() > 2.0 {
                    break;
                }
            }
            total
        })
        .collect()
}
