mod common;

use std::sync::Arc;

use mbrl::data::{BootstrapIterator, TransitionBatch};
use mbrl::envs::{cartpole_termination, no_termination};
use mbrl::models::{
    gaussian_nll_loss, mse_loss, GaussianMlpConfig, GaussianMlpEnsemble, Model, ModelEnv, ModelTrainer, Propagation,
};
use mbrl::nn::AdamConfig;
use mbrl::seeded_rng;
use ndarray::{array, Array1, Array2, ArrayView2};
use proptest::prelude::*;
use rand::Rng;

use common::{linear_buffer, small_model, with_propagation};

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn ensemble(in_size: usize, out_size: usize, e: usize, elites: usize, deterministic: bool, seed: u64) -> GaussianMlpEnsemble {
    let mut cfg = GaussianMlpConfig::new(in_size, out_size);
    cfg.hidden_size = 16;
    cfg.num_layers = 3;
    cfg.ensemble_size = e;
    cfg.num_elites = elites;
    cfg.deterministic = deterministic;
    GaussianMlpEnsemble::new(cfg, &mut seeded_rng(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nll_is_twice_negative_log_density_minus_constant(
        (mean, logvar, target) in (1usize..6, 1usize..4).prop_flat_map(|(r, c)| (
            matrix(r, c, -3.0, 3.0), matrix(r, c, -4.0, 2.0), matrix(r, c, -3.0, 3.0)))
    ) {
        let got = gaussian_nll_loss(mean.view(), logvar.view(), target.view()).unwrap();
        let mut want = 0.0;
        for ((m, lv), t) in mean.iter().zip(logvar.iter()).zip(target.iter()) {
            let var = lv.exp();
            let density = (-(t - m).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            want += -2.0 * density.ln() - (2.0 * std::f64::consts::PI).ln();
        }
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn mse_is_sum_of_squared_norms(
        (pred, target) in (1usize..6, 1usize..4).prop_flat_map(|(r, c)| (matrix(r, c, -5.0, 5.0), matrix(r, c, -5.0, 5.0)))
    ) {
        let got = mse_loss(pred.view(), target.view()).unwrap();
        let want: f64 = pred.rows().into_iter().zip(target.rows()).map(|(p, t)| {
            let d = &p - &t;
            d.dot(&d)
        }).sum();
        prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn delta_model_adds_prediction_to_observation(
        obs in matrix(5, 2, -2.0, 2.0), act in matrix(5, 1, -1.0, 1.0), seed in 0u64..50
    ) {
        let model = with_propagation(small_model(2, 1, 3, 3, true, false, seed), Propagation::EnsembleMean);
        let mut rng = seeded_rng(seed);
        let state = model.reset(obs.view(), &mut rng).unwrap();
        let (next, reward) = model.sample(obs.view(), act.view(), &state, &mut rng, true).unwrap();
        prop_assert!(reward.is_none());
        let delta = model.predict_mean(obs.view(), act.view()).unwrap();
        for ((n, o), d) in next.iter().zip(obs.iter()).zip(delta.iter()) {
            prop_assert!((n - o - d).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_mean_ignores_member_order(perm_seed in 0u64..1000) {
        let mut model = ensemble(3, 2, 5, 3, false, 11);
        model.set_elites(vec![4, 1, 2]).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.2);
        let before = model.ensemble_mean(x.view()).unwrap();

        let mut rng = seeded_rng(perm_seed);
        let mut perm: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // new slot j holds old member perm[j]
        let old = model.members().to_vec();
        for (j, &p) in perm.iter().enumerate() {
            model.members_mut()[j] = old[p].clone();
        }
        let new_elites = [4usize, 1, 2].iter().map(|&o| perm.iter().position(|&p| p == o).unwrap()).collect();
        model.set_elites(new_elites).unwrap();
        prop_assert_eq!(model.ensemble_mean(x.view()).unwrap(), before);
    }
}

fn member_batches<'a>(x: &'a Array2<f64>, t: &'a Array2<f64>, e: usize) -> (Vec<ArrayView2<'a, f64>>, Vec<ArrayView2<'a, f64>>) {
    (vec![x.view(); e], vec![t.view(); e])
}

#[test]
fn deterministic_member_fits_a_linear_map() {
    let mut rng = seeded_rng(3);
    let x = Array2::from_shape_fn((128, 3), |_| rng.random_range(-1.0..1.0));
    let w = array![[0.5, -1.0], [0.25, 0.0], [-0.75, 0.5]];
    let t = x.dot(&w) + &array![0.1, -0.2];
    let mut cfg = GaussianMlpConfig::new(3, 2);
    cfg.hidden_size = 32;
    cfg.num_layers = 2;
    cfg.ensemble_size = 1;
    cfg.num_elites = 1;
    cfg.deterministic = true;
    cfg.optimizer = AdamConfig::with_lr(1e-2);
    let mut model = GaussianMlpEnsemble::new(cfg, &mut seeded_rng(0)).unwrap();
    let (xs, ts) = member_batches(&x, &t, 1);
    for _ in 0..3000 {
        model.update(&xs, &ts).unwrap();
    }
    let mse = model.eval_score(x.view(), t.view()).unwrap().mean().unwrap();
    assert!(mse < 1e-4, "linear fit mse {mse}");
}

#[test]
fn nll_halves_within_500_updates() {
    let mut rng = seeded_rng(5);
    let x = Array2::from_shape_fn((64, 2), |_| rng.random_range(-1.0..1.0));
    let t = x.mapv(|v| 4.0 * v + 3.0);
    let mut model = ensemble(2, 2, 2, 2, false, 1);
    let (xs, ts) = member_batches(&x, &t, 2);
    let start: f64 = model.member_losses(&xs, &ts).unwrap().iter().sum();
    for _ in 0..500 {
        model.update(&xs, &ts).unwrap();
    }
    let end: f64 = model.member_losses(&xs, &ts).unwrap().iter().sum();
    assert!(start > 0.0);
    assert!(start - end >= 0.5 * start, "nll {start} -> {end}");
}

#[test]
fn constant_predictor_score_is_variance_plus_bias() {
    let mut model = ensemble(2, 1, 1, 1, true, 0);
    for layer in model.members_mut()[0].layers_mut() {
        layer.weight.fill(0.0);
        layer.bias.fill(0.0);
    }
    let c = 0.75;
    model.members_mut()[0].layers_mut().last_mut().unwrap().bias[0] = c;
    let x = Array2::zeros((6, 2));
    let t: Array2<f64> = array![[1.0], [2.0], [-1.0], [0.5], [3.0], [0.0]];
    let mean = t.mean().unwrap();
    let var = t.mapv(|v| (v - mean).powi(2)).mean().unwrap();
    let score = model.eval_score(x.view(), t.view()).unwrap()[[0, 0]];
    assert!((score - (var + (c - mean).powi(2))).abs() < 1e-12);
}

fn bootstrap_for(buffer: &mbrl::data::ReplayBuffer, e: usize, seed: u64) -> BootstrapIterator {
    let data = Arc::new(buffer.all());
    let idx: Vec<usize> = (0..data.len()).collect();
    BootstrapIterator::new(data, &idx, e, 32, true, &mut seeded_rng(seed)).unwrap()
}

#[test]
fn frozen_model_stops_after_patience() {
    let buffer = linear_buffer(100, 0.01, &mut seeded_rng(0));
    let mut model = small_model(2, 1, 3, 2, true, false, 0);
    model.update_normalizer(&buffer.all()).unwrap();
    model.model.set_learning_rate(0.0);
    let mut it = bootstrap_for(&buffer, 3, 1);
    let report = ModelTrainer::default().train(&mut model, &mut it, None, 20, 1).unwrap();
    assert_eq!(report.epochs_run, 2);
    assert_eq!(report.best_epoch, Some(1));
    assert_eq!(report.eval_scores[0], report.eval_scores[1]);
}

#[test]
fn trainer_keeps_best_elites_and_improving_snapshots() {
    let buffer = linear_buffer(300, 0.01, &mut seeded_rng(2));
    let mut model = small_model(2, 1, 7, 5, true, false, 4);
    model.update_normalizer(&buffer.all()).unwrap();
    let mut it = bootstrap_for(&buffer, 7, 3);
    let trainer = ModelTrainer::default();
    let report = trainer.train(&mut model, &mut it, None, 30, 5).unwrap();

    assert_eq!(report.elites.len(), 5);
    assert_eq!(model.elites(), report.elites.as_slice());
    let scores = model.eval_score(&it.base_batch()).unwrap().mean_axis(ndarray::Axis(1)).unwrap();
    let worst_elite = report.elites.iter().map(|&e| scores[e]).fold(f64::MIN, f64::max);
    let best_other = (0..7).filter(|e| !report.elites.contains(e)).map(|e| scores[e]).fold(f64::MAX, f64::min);
    assert!(worst_elite <= best_other);

    assert!(!report.snapshots.is_empty());
    for w in report.snapshots.windows(2) {
        assert!(w[0].0 < w[1].0);
        assert!((w[0].1 - w[1].1) / w[0].1 > trainer.improvement_threshold);
    }
    assert_eq!(report.best_epoch, report.snapshots.last().map(|s| s.0));
}

#[test]
fn validation_error_is_small_on_linear_data() {
    let buffer = linear_buffer(500, 0.0, &mut seeded_rng(7));
    let held_out = linear_buffer(200, 0.0, &mut seeded_rng(8));
    let mut model = small_model(2, 1, 5, 5, true, false, 9);
    model.update_normalizer(&buffer.all()).unwrap();
    let mut it = bootstrap_for(&buffer, 5, 10);
    ModelTrainer::default().train(&mut model, &mut it, None, 150, 0).unwrap();
    let batch = held_out.all();
    let pred = model.predict_mean(batch.obs.view(), batch.action.view()).unwrap();
    let target = &batch.next_obs - &batch.obs;
    let mse = (&pred - &target).mapv(|v| v * v).mean().unwrap();
    assert!(mse < 1e-3, "held-out mse {mse}");
}

#[test]
fn fixed_model_reset_spreads_particles_over_elites() {
    let mut model = small_model(2, 1, 7, 5, true, false, 0);
    model.set_elites(vec![0, 2, 3, 5, 6]).unwrap();
    let env = ModelEnv::new(model, no_termination, Some(mbrl::envs::pendulum_reward));
    let obs = Array2::zeros((1000, 2));
    let state = env.reset(obs.clone(), &mut seeded_rng(1)).unwrap();
    let mut counts = [0usize; 7];
    for &m in &state.model_state.assignment {
        counts[m] += 1;
    }
    assert_eq!(counts[1] + counts[4], 0);
    for m in [0, 2, 3, 5, 6] {
        assert!(counts[m].abs_diff(200) <= 50, "member {m}: {}", counts[m]);
    }
    let again = env.reset(obs, &mut seeded_rng(1)).unwrap();
    assert_eq!(state, again);
}

#[test]
fn model_env_without_termination_never_ends() {
    let model = small_model(2, 1, 3, 3, false, true, 1);
    let env = ModelEnv::new(model, no_termination, None);
    let mut rng = seeded_rng(0);
    let mut state = env.reset(Array2::from_elem((8, 2), 0.5), &mut rng).unwrap();
    for _ in 0..10 {
        let step = env.step(&mut state, Array2::from_elem((8, 1), 0.3).view(), true, &mut rng).unwrap();
        assert!(step.dones.iter().all(|d| !d));
        assert!(step.rewards.iter().all(|r| r.is_finite()));
    }
}

fn constant_reward(_a: ArrayView2<f64>, next: ArrayView2<f64>) -> Array1<f64> {
    Array1::from_elem(next.nrows(), 42.0)
}

#[test]
fn reward_function_overrides_learned_rewards() {
    let model = small_model(2, 1, 3, 3, true, true, 1);
    let env = ModelEnv::new(model, no_termination, Some(constant_reward));
    let mut rng = seeded_rng(0);
    let mut state = env.reset(Array2::zeros((4, 2)), &mut rng).unwrap();
    let step = env.step(&mut state, Array2::zeros((4, 1)).view(), false, &mut rng).unwrap();
    assert_eq!(step.rewards, Array1::from_elem(4, 42.0));
}

#[test]
fn finished_particles_stay_put_with_constant_reward() {
    let model = small_model(4, 1, 3, 3, true, false, 1);
    let env = ModelEnv::new(model, cartpole_termination, Some(mbrl::envs::cartpole_reward));
    let mut rng = seeded_rng(0);
    // particle 0 starts far outside the track, particle 1 at the origin
    let start = array![[10.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]];
    let mut state = env.reset(start, &mut rng).unwrap();
    let actions = Array2::zeros((2, 1));
    let first = env.step(&mut state, actions.view(), false, &mut rng).unwrap();
    assert!(first.dones[0]);
    let frozen = first.next_obs.row(0).to_owned();
    for _ in 0..3 {
        let step = env.step(&mut state, actions.view(), false, &mut rng).unwrap();
        assert!(step.dones[0]);
        assert_eq!(step.rewards[0], 0.0);
        assert_eq!(step.next_obs.row(0), frozen);
    }
}

#[test]
fn training_batch_shapes_are_checked() {
    let model = small_model(2, 1, 2, 2, true, false, 0);
    let bad = TransitionBatch::new(
        Array2::zeros((3, 2)),
        Array2::zeros((3, 2)),
        Array2::zeros((3, 2)),
        Array1::zeros(3),
        vec![false; 3],
    )
    .unwrap();
    assert!(model.eval_score(&bad).is_err());
}
