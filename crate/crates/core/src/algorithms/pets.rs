use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use super::curve::{CurveRow, LearningCurve};
use super::rollout::rollout_agent_trajectories;
use super::training::{train_model_on_buffer, TrainingSettings};
use crate::data::{ReplayBuffer, Transition};
use crate::envs::{reward_fn, termination_fn, Env};
use crate::models::{GaussianMlpConfig, GaussianMlpEnsemble, ModelEnv, ModelTrainer, Propagation, TransitionRewardModel};
use crate::nn::{Activation, AdamConfig};
use crate::planning::{Agent, CemOptions, ModelEnvEvaluator, MpcConfig, RandomAgent, TrajectoryOptimizerAgent};
use crate::{seeded_rng, Error, Result, SeededRng};

/// Dynamics-model architecture and optimizer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSettings {
    pub ensemble_size: usize,
    pub num_elites: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
    pub activation: Activation,
    pub deterministic: bool,
    pub propagation: Propagation,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            ensemble_size: 5,
            num_elites: 5,
            hidden_size: 32,
            num_layers: 3,
            activation: Activation::Silu,
            deterministic: true,
            propagation: Propagation::FixedModel,
            learning_rate: 1e-3,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PetsConfig {
    pub env: String,
    pub termination: String,
    /// Reward function name; ignored when rewards are learned.
    pub reward: String,
    pub num_trials: usize,
    pub trial_length: usize,
    pub initial_exploration_steps: usize,
    /// Retrain every this many trial steps (in addition to each trial start).
    pub model_retrain_interval: usize,
    pub model: ModelSettings,
    pub training: TrainingSettings,
    pub learned_rewards: bool,
    pub target_is_delta: bool,
    pub normalize: bool,
    pub horizon: usize,
    pub num_particles: usize,
    pub cem: CemOptions,
    /// Defaults to room for every step of the run.
    pub buffer_capacity: Option<usize>,
    pub seed: u64,
}

impl PetsConfig {
    /// Desk-scale continuous cart-pole setup.
    pub fn cartpole() -> Self {
        Self {
            env: "cartpole_continuous".into(),
            termination: "cartpole".into(),
            reward: "cartpole".into(),
            num_trials: 20,
            trial_length: 200,
            initial_exploration_steps: 200,
            model_retrain_interval: 200,
            model: ModelSettings::default(),
            training: TrainingSettings::default(),
            learned_rewards: false,
            target_is_delta: true,
            normalize: true,
            horizon: 15,
            num_particles: 5,
            cem: CemOptions {
                population_size: 100,
                num_elites: 10,
                num_iterations: 5,
                alpha: 0.1,
                return_mean_elites: true,
            },
            buffer_capacity: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.model_retrain_interval == 0 {
            return Err(Error::invalid("model_retrain_interval must be at least 1"));
        }
        if self.model.num_elites == 0 || self.model.num_elites > self.model.ensemble_size {
            return Err(Error::invalid(format!(
                "num_elites {} must be in 1..={}",
                self.model.num_elites, self.model.ensemble_size
            )));
        }
        if self.horizon == 0 || self.horizon > self.trial_length {
            return Err(Error::invalid(format!(
                "horizon {} must be in 1..={} (trial_length)",
                self.horizon, self.trial_length
            )));
        }
        if self.num_particles == 0 {
            return Err(Error::invalid("num_particles must be at least 1"));
        }
        if self.trial_length == 0 {
            return Err(Error::invalid("trial_length must be at least 1"));
        }
        Ok(())
    }

    fn capacity(&self) -> usize {
        self.buffer_capacity
            .unwrap_or(self.initial_exploration_steps + self.num_trials * self.trial_length)
            .max(1)
    }
}

/// A freshly initialized transition/reward model for the given dimensions.
pub fn build_model(
    settings: &ModelSettings,
    obs_dim: usize,
    action_dim: usize,
    learned_rewards: bool,
    target_is_delta: bool,
    normalize: bool,
    rng: &mut SeededRng,
) -> Result<TransitionRewardModel> {
    let mut cfg = GaussianMlpConfig::new(obs_dim + action_dim, obs_dim + usize::from(learned_rewards));
    cfg.hidden_size = settings.hidden_size;
    cfg.num_layers = settings.num_layers;
    cfg.ensemble_size = settings.ensemble_size;
    cfg.num_elites = settings.num_elites;
    cfg.activation = settings.activation;
    cfg.deterministic = settings.deterministic;
    cfg.optimizer = AdamConfig {
        weight_decay: settings.weight_decay,
        ..AdamConfig::with_lr(settings.learning_rate)
    };
    let ensemble = GaussianMlpEnsemble::new(cfg, rng)?;
    TransitionRewardModel::new(
        ensemble,
        obs_dim,
        action_dim,
        target_is_delta,
        learned_rewards,
        normalize,
        settings.propagation,
    )
}

pub struct PetsOutcome {
    pub curve: LearningCurve,
    pub model: TransitionRewardModel,
    pub buffer: ReplayBuffer,
    /// Trial-step counter value at each model training.
    pub training_steps: Vec<usize>,
}

/// Runs PETS and, with `out_dir`, persists the curve, model, buffer and
/// latest trainer report after every trial.
pub fn pets_run(cfg: &PetsConfig, env: &mut dyn Env, out_dir: Option<&Path>) -> Result<PetsOutcome> {
    pets_run_with_observer(cfg, env, out_dir, &mut |_, _, _| {})
}

/// [`pets_run`] that also calls `observer(row, model, buffer)` at the end of
/// every trial.
pub fn pets_run_with_observer(
    cfg: &PetsConfig,
    env: &mut dyn Env,
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(&CurveRow, &TransitionRewardModel, &ReplayBuffer),
) -> Result<PetsOutcome> {
    cfg.validate()?;
    let spec = env.spec().clone();
    let mut rng = seeded_rng(cfg.seed);
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("pets_config.txt"), format!("{cfg:#?}\n"))?;
    }

    let mut buffer = ReplayBuffer::new(cfg.capacity(), spec.obs_dim, spec.action_dim)?;
    let mut explorer = RandomAgent::new(spec.action_low.clone(), spec.action_high.clone())?;
    rollout_agent_trajectories(env, cfg.initial_exploration_steps, &mut explorer, Some(&mut buffer), &mut rng)?;

    let model = build_model(
        &cfg.model,
        spec.obs_dim,
        spec.action_dim,
        cfg.learned_rewards,
        cfg.target_is_delta,
        cfg.normalize,
        &mut rng,
    )?;
    let reward = if cfg.learned_rewards { None } else { Some(reward_fn(&cfg.reward)?) };
    let model_env = ModelEnv::new(model, termination_fn(&cfg.termination)?, reward);
    let mpc = MpcConfig::new(cfg.horizon, cfg.cem.clone(), spec.action_low.clone(), spec.action_high.clone());
    let mut agent = TrajectoryOptimizerAgent::new(mpc, ModelEnvEvaluator::new(model_env, cfg.num_particles))?;
    let trainer = ModelTrainer::new(cfg.training.improvement_threshold);

    let mut curve = LearningCurve::default();
    let mut training_steps = Vec::new();
    let mut trial_steps_total = 0usize;
    let mut timing = String::from("trial,wall_seconds\n");
    let started = Instant::now();

    for trial in 1..=cfg.num_trials {
        let mut obs = env.reset(&mut rng);
        agent.reset();
        let mut episode_return = 0.0;
        let mut epochs = 0;
        let mut last_report = None;
        for step in 0..cfg.trial_length {
            if (step == 0 || trial_steps_total % cfg.model_retrain_interval == 0) && !buffer.is_empty() {
                let model = agent.evaluator_mut().model_env.model_mut();
                let report = match train_model_on_buffer(model, &trainer, &buffer, &cfg.training, &mut rng, None) {
                    Ok(r) => r,
                    Err(e) => return Err(divergence_bundle(e, out_dir, &buffer)),
                };
                epochs += report.epochs_run;
                training_steps.push(trial_steps_total);
                last_report = Some(report);
            }
            let action = agent.act(&obs, &mut rng)?;
            let out = env.step(&action);
            trial_steps_total += 1;
            episode_return += out.reward;
            let truncated = step + 1 == cfg.trial_length;
            buffer.add(&Transition {
                obs: obs.clone(),
                action,
                next_obs: out.obs.clone(),
                reward: out.reward,
                done: out.done || truncated,
            })?;
            obs = out.obs;
            if out.done {
                break;
            }
        }
        let row = CurveRow {
            trial,
            env_steps: trial_steps_total,
            episode_return,
            train_epochs: epochs,
            seconds: trial_steps_total as f64 * spec.dt,
        };
        curve.rows.push(row.clone());
        let _ = writeln!(timing, "{trial},{}", started.elapsed().as_secs_f64());
        let model = agent.evaluator().model_env.model();
        if let Some(dir) = out_dir {
            curve.save(dir.join("results.csv"))?;
            model.save(dir.join("model.ckpt"))?;
            buffer.save(dir.join("buffer.dat"))?;
            std::fs::write(dir.join("timing.csv"), &timing)?;
            if let Some(report) = &last_report {
                std::fs::write(dir.join("trainer_report.txt"), report.to_kv_string())?;
            }
        }
        observer(&row, model, &buffer);
    }
    if let Some(dir) = out_dir {
        curve.save(dir.join("results.csv"))?;
    }
    let model = agent.evaluator().model_env.model().clone();
    Ok(PetsOutcome {
        curve,
        model,
        buffer,
        training_steps,
    })
}

/// Saves what is needed to investigate a failed training, then hands the
/// error back.
fn divergence_bundle(err: Error, out_dir: Option<&Path>, buffer: &ReplayBuffer) -> Error {
    let Some(dir) = out_dir else { return err };
    let mut text = format!("error={err}\n");
    if let Error::Divergence { report: Some(report), .. } = &err {
        text.push_str(&report.to_kv_string());
    }
    let bundle = dir.join("divergence");
    let written = std::fs::create_dir_all(&bundle)
        .and_then(|_| std::fs::write(bundle.join("diagnostic.txt"), text))
        .map_err(Error::from)
        .and_then(|_| buffer.save(bundle.join("buffer.dat")));
    match written {
        Ok(()) => err,
        Err(io) => Error::invalid(format!("{err}; additionally failed to write diagnostics: {io}")),
    }
}
