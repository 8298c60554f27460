//! Run configuration.
//!
//! A TOML document with sections `dynamics_model`, `algorithm`, `overrides`,
//! `agent` and `optimizer`. Model input and output sizes may be written as
//! `"???"` and are completed from the environment's shapes; unknown keys are
//! rejected and every error names the offending key path.

use std::fmt;
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::algorithms::{ModelSettings, PetsConfig, TrainingSettings};
use crate::envs::{default_fn_names, make_env_with_trial_length, reward_fn, termination_fn, Env, EnvSpec};
use crate::models::Propagation;
use crate::nn::Activation;
use crate::planning::{CemOptions, MpcConfig};
use crate::{Error, Result};

/// Marks a field to be filled in from the environment.
pub const SENTINEL: &str = "???";

/// A size that is either given or left for runtime resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeField {
    #[default]
    Unresolved,
    Value(usize),
}

impl Serialize for SizeField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SizeField::Unresolved => s.serialize_str(SENTINEL),
            SizeField::Value(v) => s.serialize_u64(*v as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SizeField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = SizeField;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a non-negative integer or \"{SENTINEL}\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<SizeField, E> {
                Ok(SizeField::Value(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<SizeField, E> {
                usize::try_from(v)
                    .map(SizeField::Value)
                    .map_err(|_| E::invalid_value(de::Unexpected::Signed(v), &self))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<SizeField, E> {
                if v == SENTINEL {
                    Ok(SizeField::Unresolved)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsModelSection {
    pub num_layers: usize,
    pub in_size: SizeField,
    pub out_size: SizeField,
    pub ensemble_size: usize,
    pub num_elites: usize,
    pub hid_size: usize,
    /// SiLU hidden activations when true, ReLU otherwise.
    pub use_silu: bool,
    pub deterministic: bool,
    pub propagation_method: String,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for DynamicsModelSection {
    fn default() -> Self {
        let m = ModelSettings::default();
        Self {
            num_layers: m.num_layers,
            in_size: SizeField::Unresolved,
            out_size: SizeField::Unresolved,
            ensemble_size: m.ensemble_size,
            num_elites: m.num_elites,
            hid_size: m.hidden_size,
            use_silu: m.activation == Activation::Silu,
            deterministic: m.deterministic,
            propagation_method: m.propagation.name().to_string(),
            learning_rate: m.learning_rate,
            weight_decay: m.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub initial_exploration_steps: usize,
    pub learned_rewards: bool,
    pub target_is_delta: bool,
    pub normalize: bool,
    pub num_particles: usize,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        let p = PetsConfig::cartpole();
        Self {
            initial_exploration_steps: p.initial_exploration_steps,
            learned_rewards: p.learned_rewards,
            target_is_delta: p.target_is_delta,
            normalize: p.normalize,
            num_particles: p.num_particles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverridesSection {
    pub env: String,
    /// Defaults to the environment's own termination function.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub term_fn: Option<String>,
    /// Defaults to the environment's own reward function.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward_fn: Option<String>,
    /// Defaults to the environment's trial length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial_length: Option<usize>,
    pub num_trials: usize,
    pub freq_train_model: usize,
    pub model_batch_size: usize,
    pub validation_ratio: f64,
    pub num_epochs_train_model: usize,
    pub patience: usize,
    pub improvement_threshold: f64,
    pub shuffle_each_epoch: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer_capacity: Option<usize>,
}

impl Default for OverridesSection {
    fn default() -> Self {
        let p = PetsConfig::cartpole();
        let t = TrainingSettings::default();
        Self {
            env: p.env,
            term_fn: None,
            reward_fn: None,
            trial_length: None,
            num_trials: p.num_trials,
            freq_train_model: p.model_retrain_interval,
            model_batch_size: t.batch_size,
            validation_ratio: t.validation_ratio,
            num_epochs_train_model: t.num_epochs,
            patience: t.patience,
            improvement_threshold: t.improvement_threshold,
            shuffle_each_epoch: t.shuffle_each_epoch,
            buffer_capacity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    pub planning_horizon: usize,
    pub warm_start: bool,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            planning_horizon: PetsConfig::cartpole().horizon,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub num_iterations: usize,
    pub population_size: usize,
    pub num_elites: usize,
    pub alpha: f64,
    pub return_mean_elites: bool,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let c = PetsConfig::cartpole().cem;
        Self {
            num_iterations: c.num_iterations,
            population_size: c.population_size,
            num_elites: c.num_elites,
            alpha: c.alpha,
            return_mean_elites: c.return_mean_elites,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub dynamics_model: DynamicsModelSection,
    pub algorithm: AlgorithmSection,
    pub overrides: OverridesSection,
    pub agent: AgentSection,
    pub optimizer: OptimizerSection,
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("", e.message().to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let mut path = e.path().to_string();
            let message = e.inner().message().to_string();
            // Make sure an unknown key itself is part of the reported path.
            if let Some(key) = message.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
                if path == "." || path.is_empty() {
                    path = key.to_string();
                } else if !path.ends_with(key) {
                    path = format!("{path}.{key}");
                }
            }
            config_err(&path, message)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize config: {e}")))
    }

    /// The configured environment, with the configured trial length.
    pub fn make_env(&self) -> Result<Box<dyn Env>> {
        make_env_with_trial_length(&self.overrides.env, self.overrides.trial_length)
            .map_err(|e| config_err("overrides.env", e.to_string()))
    }

    pub fn env_spec(&self) -> Result<EnvSpec> {
        Ok(self.make_env()?.spec().clone())
    }

    /// Fills sentinel sizes from the environment and checks given sizes
    /// against it. Afterwards no sentinel remains.
    pub fn resolve(&mut self) -> Result<()> {
        let spec = self.env_spec()?;
        let want_in = spec.obs_dim + spec.action_dim;
        let want_out = spec.obs_dim + usize::from(self.algorithm.learned_rewards);
        for (field, path, want) in [
            (&mut self.dynamics_model.in_size, "dynamics_model.in_size", want_in),
            (&mut self.dynamics_model.out_size, "dynamics_model.out_size", want_out),
        ] {
            match *field {
                SizeField::Unresolved => *field = SizeField::Value(want),
                SizeField::Value(v) if v != want => {
                    return Err(config_err(path, format!("is {v} but environment `{}` needs {want}", spec.name)))
                }
                SizeField::Value(_) => {}
            }
        }
        self.pets_config().map(|_| ())
    }

    pub fn is_resolved(&self) -> bool {
        self.dynamics_model.in_size != SizeField::Unresolved && self.dynamics_model.out_size != SizeField::Unresolved
    }

    pub fn cem_options(&self) -> CemOptions {
        let o = &self.optimizer;
        CemOptions {
            population_size: o.population_size,
            num_elites: o.num_elites,
            num_iterations: o.num_iterations,
            alpha: o.alpha,
            return_mean_elites: o.return_mean_elites,
        }
    }

    /// MPC settings for the configured environment.
    pub fn mpc_config(&self) -> Result<MpcConfig> {
        let spec = self.env_spec()?;
        let mut mpc = MpcConfig::new(
            self.agent.planning_horizon,
            self.cem_options(),
            spec.action_low.clone(),
            spec.action_high.clone(),
        );
        mpc.warm_start = self.agent.warm_start;
        Ok(mpc)
    }

    /// Converts to the PETS loop configuration, validating every value and
    /// naming the key at fault.
    pub fn pets_config(&self) -> Result<PetsConfig> {
        let spec = self.env_spec()?;
        let (default_term, default_reward) = default_fn_names(&self.overrides.env)?;
        let termination = self.overrides.term_fn.clone().unwrap_or_else(|| default_term.to_string());
        termination_fn(&termination).map_err(|e| config_err("overrides.term_fn", e.to_string()))?;
        let reward = self.overrides.reward_fn.clone().unwrap_or_else(|| default_reward.to_string());
        reward_fn(&reward).map_err(|e| config_err("overrides.reward_fn", e.to_string()))?;
        let dm = &self.dynamics_model;
        let propagation = Propagation::from_name(&dm.propagation_method)
            .map_err(|e| config_err("dynamics_model.propagation_method", e.to_string()))?;

        let positive = |v: usize, path: &str| {
            if v == 0 {
                Err(config_err(path, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        positive(dm.num_layers, "dynamics_model.num_layers")?;
        positive(dm.hid_size, "dynamics_model.hid_size")?;
        positive(dm.ensemble_size, "dynamics_model.ensemble_size")?;
        if dm.num_elites == 0 || dm.num_elites > dm.ensemble_size {
            return Err(config_err(
                "dynamics_model.num_elites",
                format!("must be in 1..={} (ensemble_size)", dm.ensemble_size),
            ));
        }
        if !(dm.learning_rate > 0.0 && dm.learning_rate.is_finite()) {
            return Err(config_err("dynamics_model.learning_rate", "must be positive"));
        }
        if !(dm.weight_decay >= 0.0 && dm.weight_decay.is_finite()) {
            return Err(config_err("dynamics_model.weight_decay", "must be non-negative"));
        }
        positive(self.algorithm.num_particles, "algorithm.num_particles")?;
        let ov = &self.overrides;
        positive(spec.trial_length, "overrides.trial_length")?;
        positive(ov.freq_train_model, "overrides.freq_train_model")?;
        positive(ov.model_batch_size, "overrides.model_batch_size")?;
        positive(ov.num_epochs_train_model, "overrides.num_epochs_train_model")?;
        if !(0.0..1.0).contains(&ov.validation_ratio) {
            return Err(config_err("overrides.validation_ratio", "must be in [0, 1)"));
        }
        if !(ov.improvement_threshold >= 0.0) {
            return Err(config_err("overrides.improvement_threshold", "must be non-negative"));
        }
        let h = self.agent.planning_horizon;
        if h == 0 || h > spec.trial_length {
            return Err(config_err(
                "agent.planning_horizon",
                format!("must be in 1..={} (trial length)", spec.trial_length),
            ));
        }
        let o = &self.optimizer;
        positive(o.population_size, "optimizer.population_size")?;
        positive(o.num_iterations, "optimizer.num_iterations")?;
        if o.num_elites == 0 || o.num_elites > o.population_size {
            return Err(config_err(
                "optimizer.num_elites",
                format!("must be in 1..={} (population_size)", o.population_size),
            ));
        }
        if !(0.0..=1.0).contains(&o.alpha) {
            return Err(config_err("optimizer.alpha", "must be in [0, 1]"));
        }

        Ok(PetsConfig {
            env: ov.env.clone(),
            termination,
            reward,
            num_trials: ov.num_trials,
            trial_length: spec.trial_length,
            initial_exploration_steps: self.algorithm.initial_exploration_steps,
            model_retrain_interval: ov.freq_train_model,
            model: ModelSettings {
                ensemble_size: dm.ensemble_size,
                num_elites: dm.num_elites,
                hidden_size: dm.hid_size,
                num_layers: dm.num_layers,
                activation: if dm.use_silu { Activation::Silu } else { Activation::Relu },
                deterministic: dm.deterministic,
                propagation,
                learning_rate: dm.learning_rate,
                weight_decay: dm.weight_decay,
            },
            training: TrainingSettings {
                batch_size: ov.model_batch_size,
                validation_ratio: ov.validation_ratio,
                num_epochs: ov.num_epochs_train_model,
                patience: ov.patience,
                improvement_threshold: ov.improvement_threshold,
                shuffle_each_epoch: ov.shuffle_each_epoch,
            },
            learned_rewards: self.algorithm.learned_rewards,
            target_is_delta: self.algorithm.target_is_delta,
            normalize: self.algorithm.normalize,
            horizon: h,
            num_particles: self.algorithm.num_particles,
            cem: self.cem_options(),
            buffer_capacity: ov.buffer_capacity,
            seed: self.seed,
        })
    }
}
