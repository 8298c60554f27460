mod common;

use std::f64::consts::PI;

use mbrl::algorithms::{pets_run, train_model_on_buffer, LearningCurve, PetsConfig, TrainingSettings};
use mbrl::diagnostics::{dataset_evaluate, true_env_cem_control, visualize_rollout, EvaluationTable, RolloutComparison};
use mbrl::envs::{make_env, no_termination, CartPole, Env, EnvSpec, EnvStep, Pendulum};
use mbrl::models::{ModelEnv, ModelTrainer};
use mbrl::planning::{CemOptions, MpcConfig, RandomAgent};
use mbrl::{seeded_rng, SeededRng};

use common::{linear_buffer, quadratic_reward, small_model, DoubleIntegrator};

/// A few seconds of PETS on cart-pole.
fn tiny_cartpole(seed: u64) -> PetsConfig {
    let mut cfg = PetsConfig::cartpole();
    cfg.seed = seed;
    cfg.num_trials = 2;
    cfg.trial_length = 40;
    cfg.initial_exploration_steps = 40;
    cfg.model_retrain_interval = 20;
    cfg.model.hidden_size = 8;
    cfg.model.ensemble_size = 3;
    cfg.model.num_elites = 2;
    cfg.training.num_epochs = 3;
    cfg.horizon = 5;
    cfg.num_particles = 2;
    cfg.cem.population_size = 16;
    cfg.cem.num_elites = 4;
    cfg.cem.num_iterations = 2;
    cfg
}

#[test]
fn pets_runs_are_reproducible_and_persisted() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = tiny_cartpole(3);
    let first = pets_run(&cfg, &mut CartPole::new(), Some(a.path())).unwrap();
    let second = pets_run(&cfg, &mut CartPole::new(), Some(b.path())).unwrap();
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&a, "results.csv"), read(&b, "results.csv"));
    assert_eq!(read(&a, "model.ckpt"), read(&b, "model.ckpt"));
    assert_eq!(read(&a, "buffer.dat"), read(&b, "buffer.dat"));
    assert_eq!(first.training_steps, second.training_steps);
    let curve = LearningCurve::load(a.path().join("results.csv")).unwrap();
    assert_eq!(curve, first.curve);
    for f in ["timing.csv", "trainer_report.txt", "pets_config.txt"] {
        assert!(a.path().join(f).exists(), "{f}");
    }
}

#[test]
fn retraining_follows_the_step_counter() {
    let mut cfg = tiny_cartpole(0);
    cfg.env = "pendulum".into();
    cfg.termination = "no_termination".into();
    cfg.reward = "pendulum".into();
    cfg.num_trials = 3;
    cfg.trial_length = 200;
    cfg.model_retrain_interval = 250;
    cfg.horizon = 2;
    cfg.num_particles = 1;
    cfg.cem.population_size = 4;
    cfg.cem.num_elites = 1;
    cfg.cem.num_iterations = 1;
    cfg.training.num_epochs = 1;
    let out = pets_run(&cfg, &mut Pendulum::new(), None).unwrap();
    assert_eq!(out.training_steps, vec![0, 200, 250, 400, 500]);
    let steps: Vec<usize> = out.curve.rows.iter().map(|r| r.env_steps).collect();
    assert_eq!(steps, vec![200, 400, 600]);
    assert_eq!(out.buffer.len(), 40 + 600);
}

#[test]
fn buffer_holds_exploration_plus_trial_steps_up_to_capacity() {
    let cfg = tiny_cartpole(1);
    let out = pets_run(&cfg, &mut CartPole::new(), None).unwrap();
    let trial_steps = out.curve.rows.last().unwrap().env_steps;
    assert_eq!(out.buffer.len(), cfg.initial_exploration_steps + trial_steps);
    // every stored episode ends on a done flag or the trial boundary
    let dones = out.buffer.iter_ordered().filter(|t| t.done).count();
    assert!(dones >= cfg.num_trials);

    let mut capped = tiny_cartpole(1);
    capped.buffer_capacity = Some(50);
    let out = pets_run(&capped, &mut CartPole::new(), None).unwrap();
    assert_eq!(out.buffer.len(), 50);
    assert_eq!(out.buffer.capacity(), 50);
}

#[test]
fn true_env_control_swings_the_pendulum_up() {
    let mut env = Pendulum::new();
    let mpc = MpcConfig::new(
        30,
        CemOptions {
            population_size: 200,
            num_elites: 20,
            num_iterations: 5,
            alpha: 0.1,
            return_mean_elites: true,
        },
        vec![-2.0],
        vec![2.0],
    );
    let logs = true_env_cem_control(&mut env, mpc, 1, Some(&[PI, 0.0]), &mut seeded_rng(0)).unwrap();
    let rewards = &logs[0].rewards;
    assert_eq!(rewards.len(), 200);
    let tail_cost = -rewards[150..].iter().sum::<f64>() / 50.0;
    assert!(tail_cost < 1.0, "mean cost over the last 50 steps: {tail_cost}");
}

#[test]
fn dataset_evaluation_on_linear_data() {
    let buffer = linear_buffer(400, 0.0, &mut seeded_rng(0));
    let mut model = small_model(2, 1, 3, 3, true, false, 0);
    let settings = TrainingSettings {
        num_epochs: 100,
        patience: 0,
        ..TrainingSettings::default()
    };
    train_model_on_buffer(&mut model, &ModelTrainer::default(), &buffer, &settings, &mut seeded_rng(1), None).unwrap();
    let table = dataset_evaluate(&model, &linear_buffer(200, 0.0, &mut seeded_rng(5))).unwrap();
    for s in table.summary() {
        assert_eq!(s.count, 200);
        assert!(s.r2 > 0.99, "dimension {} r2 {}", s.dimension, s.r2);
    }
    let dir = tempfile::tempdir().unwrap();
    table.write_dir(dir.path()).unwrap();
    assert_eq!(EvaluationTable::read_dir(dir.path()).unwrap(), table);
}

/// The double integrator as a ground-truth env.
#[derive(Clone)]
struct IntegratorEnv {
    spec: EnvSpec,
    model: DoubleIntegrator,
    state: [f64; 2],
}

impl IntegratorEnv {
    fn new() -> Self {
        Self {
            spec: EnvSpec {
                name: "integrator",
                obs_dim: 2,
                action_dim: 1,
                action_low: vec![-1.0],
                action_high: vec![1.0],
                trial_length: 100,
                dt: 0.1,
            },
            model: DoubleIntegrator { dt: 0.1 },
            state: [0.5, -0.2],
        }
    }
}

impl Env for IntegratorEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn reset(&mut self, _: &mut SeededRng) -> Vec<f64> {
        self.state = [0.5, -0.2];
        self.state.to_vec()
    }
    fn step(&mut self, action: &[f64]) -> EnvStep {
        self.state = self.model.step(self.state, action[0]);
        EnvStep {
            obs: self.state.to_vec(),
            reward: 0.0,
            done: false,
        }
    }
    fn state(&self) -> Vec<f64> {
        self.state.to_vec()
    }
    fn set_state(&mut self, state: &[f64]) {
        self.state = [state[0], state[1]];
    }
    fn box_clone(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}

#[test]
fn perfect_model_traces_the_true_trajectory() {
    let model_env = ModelEnv::new(DoubleIntegrator { dt: 0.1 }, no_termination, Some(quadratic_reward));
    let mut env = IntegratorEnv::new();
    let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
    let cmp = visualize_rollout(&model_env, &mut env, &mut agent, 30, 3, &mut seeded_rng(0)).unwrap();
    assert_eq!(cmp.horizon(), 30);
    for s in &cmp.samples {
        assert_eq!(s, &cmp.true_obs);
    }
    let text = cmp.dim_csv(1);
    assert_eq!(text.lines().count(), 31);
    let (truth, samples) = RolloutComparison::parse_dim_csv(&text, 3).unwrap();
    assert_eq!(truth, cmp.true_obs.column(1).to_vec());
    assert_eq!(samples[2], truth);
}

#[test]
fn deterministic_model_samples_coincide() {
    let model = small_model(4, 1, 1, 1, true, false, 0);
    let model_env = ModelEnv::new(model, no_termination, Some(mbrl::envs::cartpole_reward));
    let mut env = make_env("cartpole_continuous").unwrap();
    env.reset(&mut seeded_rng(2));
    let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
    let cmp = visualize_rollout(&model_env, env.as_mut(), &mut agent, 30, 4, &mut seeded_rng(0)).unwrap();
    assert_eq!(cmp.true_obs.nrows(), 30);
    for s in &cmp.samples[1..] {
        assert_eq!(s, &cmp.samples[0]);
    }
}
