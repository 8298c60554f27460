use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{EnsembleSnapshot, GaussianMlpConfig, GaussianMlpEnsemble, Model};
use crate::data::{EnsembleBatch, Normalizer, TransitionBatch};
use crate::nn::{Activation, Checkpoint};
use crate::{Error, Result, SeededRng};

/// How simulated particles use the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Each particle is bound to one uniformly drawn elite for its whole
    /// trajectory.
    FixedModel,
    /// Every particle uses the average of the elite predictions.
    EnsembleMean,
}

impl Propagation {
    pub fn name(self) -> &'static str {
        match self {
            Propagation::FixedModel => "fixed_model",
            Propagation::EnsembleMean => "ensemble_mean",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "fixed_model" => Ok(Propagation::FixedModel),
            "ensemble_mean" => Ok(Propagation::EnsembleMean),
            other => Err(Error::UnknownName {
                kind: "propagation method",
                name: other.to_string(),
                available: "fixed_model, ensemble_mean".into(),
            }),
        }
    }
}

/// Per-trajectory model state: which member drives each particle.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelState {
    pub assignment: Vec<usize>,
}

/// Adapts a [`GaussianMlpEnsemble`] to one-dimensional transition data:
/// input is the normalized `(obs, action)` concatenation, target is the
/// observation delta (or the next observation) with the reward appended
/// when rewards are learned.
#[derive(Debug, Clone)]
pub struct TransitionRewardModel {
    pub model: GaussianMlpEnsemble,
    obs_dim: usize,
    action_dim: usize,
    target_is_delta: bool,
    learned_rewards: bool,
    normalize: bool,
    normalizer: Normalizer,
    propagation: Propagation,
}

impl TransitionRewardModel {
    pub fn new(
        model: GaussianMlpEnsemble,
        obs_dim: usize,
        action_dim: usize,
        target_is_delta: bool,
        learned_rewards: bool,
        normalize: bool,
        propagation: Propagation,
    ) -> Result<Self> {
        let target = obs_dim + usize::from(learned_rewards);
        if model.in_size() != obs_dim + action_dim || model.out_size() != target {
            return Err(Error::shape(format!(
                "model maps {} -> {}, wrapper needs {} -> {}",
                model.in_size(),
                model.out_size(),
                obs_dim + action_dim,
                target
            )));
        }
        Ok(Self {
            model,
            obs_dim,
            action_dim,
            target_is_delta,
            learned_rewards,
            normalize,
            normalizer: Normalizer::new(obs_dim + action_dim),
            propagation,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn target_is_delta(&self) -> bool {
        self.target_is_delta
    }

    pub fn learned_rewards(&self) -> bool {
        self.learned_rewards
    }

    pub fn propagation(&self) -> Propagation {
        self.propagation
    }

    pub fn set_propagation(&mut self, p: Propagation) {
        self.propagation = p;
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn target_dim(&self) -> usize {
        self.obs_dim + usize::from(self.learned_rewards)
    }

    /// Refits input statistics on the given data (no-op if normalization is
    /// disabled).
    pub fn update_normalizer(&mut self, batch: &TransitionBatch) -> Result<()> {
        if !self.normalize {
            return Ok(());
        }
        let x = concatenate![Axis(1), batch.obs, batch.action];
        self.normalizer.fit(x.view())
    }

    fn check_dims(&self, obs: &ArrayView2<f64>, action: &ArrayView2<f64>) -> Result<()> {
        if obs.ncols() != self.obs_dim || action.ncols() != self.action_dim || obs.nrows() != action.nrows() {
            return Err(Error::shape(format!(
                "obs {:?} / action {:?} do not match S={} A={}",
                obs.dim(),
                action.dim(),
                self.obs_dim,
                self.action_dim
            )));
        }
        Ok(())
    }

    pub fn model_input(&self, obs: ArrayView2<f64>, action: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_dims(&obs, &action)?;
        let x = concatenate![Axis(1), obs, action];
        self.normalizer.normalize(x.view())
    }

    /// `(model_input, model_target)` for a batch.
    pub fn process_batch(&self, batch: &TransitionBatch) -> Result<(Array2<f64>, Array2<f64>)> {
        let input = self.model_input(batch.obs.view(), batch.action.view())?;
        if batch.next_obs.ncols() != self.obs_dim {
            return Err(Error::shape("next_obs width does not match obs_dim"));
        }
        let obs_target = if self.target_is_delta {
            &batch.next_obs - &batch.obs
        } else {
            batch.next_obs.clone()
        };
        let target = if self.learned_rewards {
            let r = batch.reward.view().insert_axis(Axis(1));
            concatenate![Axis(1), obs_target, r]
        } else {
            obs_target
        };
        Ok((input, target))
    }

    fn process_ensemble(&self, batch: &EnsembleBatch) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
        if batch.ensemble_size() != self.model.ensemble_size() {
            return Err(Error::shape(format!(
                "batch ensemble axis {} != ensemble size {}",
                batch.ensemble_size(),
                self.model.ensemble_size()
            )));
        }
        let pairs = batch
            .members
            .iter()
            .map(|b| self.process_batch(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(pairs.into_iter().unzip())
    }

    /// Elite-averaged mean prediction in target space.
    pub fn predict_mean(&self, obs: ArrayView2<f64>, action: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.model_input(obs, action)?;
        self.model.ensemble_mean(x.view())
    }

    /// Mean and optional log-variance of the target for every row, using
    /// `assignment` for per-row members (fixed-model) or the elite average.
    fn predict_rows(&self, x: ArrayView2<f64>, state: &ModelState) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
        let rows = x.nrows();
        let d = self.target_dim();
        match self.propagation {
            Propagation::FixedModel => {
                if state.assignment.len() != rows {
                    return Err(Error::shape(format!(
                        "model state covers {} particles, batch has {rows}",
                        state.assignment.len()
                    )));
                }
                let mut mean = Array2::zeros((rows, d));
                let mut logvar = (!self.model.is_deterministic()).then(|| Array2::zeros((rows, d)));
                let mut by_member: Vec<Vec<usize>> = vec![Vec::new(); self.model.ensemble_size()];
                for (r, &m) in state.assignment.iter().enumerate() {
                    if m >= by_member.len() {
                        return Err(Error::invalid(format!("particle {r} assigned to member {m}")));
                    }
                    by_member[m].push(r);
                }
                for (m, idx) in by_member.iter().enumerate().filter(|(_, idx)| !idx.is_empty()) {
                    let out = self.model.member_forward(m, x.select(Axis(0), idx).view())?;
                    for (k, &r) in idx.iter().enumerate() {
                        mean.row_mut(r).assign(&out.mean.row(k));
                        if let (Some(lv), Some(out_lv)) = (logvar.as_mut(), out.logvar.as_ref()) {
                            lv.row_mut(r).assign(&out_lv.row(k));
                        }
                    }
                }
                Ok((mean, logvar))
            }
            Propagation::EnsembleMean => {
                let elites = self.model.elites();
                let mut mean = Array2::zeros((rows, d));
                let mut var = Array2::<f64>::zeros((rows, d));
                for &e in elites {
                    let out = self.model.member_forward(e, x)?;
                    mean += &out.mean;
                    if let Some(lv) = out.logvar {
                        var += &lv.mapv(f64::exp);
                    }
                }
                let k = elites.len() as f64;
                mean /= k;
                let logvar = (!self.model.is_deterministic()).then(|| (var / k).mapv(f64::ln));
                Ok((mean, logvar))
            }
        }
    }
}

impl Model for TransitionRewardModel {
    type Snapshot = EnsembleSnapshot;

    fn ensemble_size(&self) -> usize {
        self.model.ensemble_size()
    }

    fn loss(&self, batch: &EnsembleBatch) -> Result<Vec<f64>> {
        let (xs, ts) = self.process_ensemble(batch)?;
        let xv: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let tv: Vec<_> = ts.iter().map(|t| t.view()).collect();
        self.model.member_losses(&xv, &tv)
    }

    fn update(&mut self, batch: &EnsembleBatch) -> Result<Vec<f64>> {
        let (xs, ts) = self.process_ensemble(batch)?;
        let xv: Vec<_> = xs.iter().map(|x| x.view()).collect();
        let tv: Vec<_> = ts.iter().map(|t| t.view()).collect();
        self.model.update(&xv, &tv)
    }

    fn eval_score(&self, batch: &TransitionBatch) -> Result<Array2<f64>> {
        let (x, t) = self.process_batch(batch)?;
        self.model.eval_score(x.view(), t.view())
    }

    fn elites(&self) -> &[usize] {
        self.model.elites()
    }

    fn set_elites(&mut self, elites: Vec<usize>) -> Result<()> {
        self.model.set_elites(elites)
    }

    fn num_elites(&self) -> usize {
        self.model.config().num_elites
    }

    fn snapshot(&self) -> EnsembleSnapshot {
        self.model.snapshot()
    }

    fn restore(&mut self, snapshot: &EnsembleSnapshot) {
        self.model.restore(snapshot)
    }

    fn reset(&self, obs: ArrayView2<f64>, rng: &mut SeededRng) -> Result<ModelState> {
        if obs.nrows() == 0 {
            return Err(Error::Empty("model reset with zero particles".into()));
        }
        let assignment = match self.propagation {
            Propagation::FixedModel => {
                let elites = self.model.elites();
                (0..obs.nrows()).map(|_| elites[rng.random_range(0..elites.len())]).collect()
            }
            Propagation::EnsembleMean => Vec::new(),
        };
        Ok(ModelState { assignment })
    }

    fn sample(
        &self,
        obs: ArrayView2<f64>,
        action: ArrayView2<f64>,
        state: &ModelState,
        rng: &mut SeededRng,
        sample: bool,
    ) -> Result<(Array2<f64>, Option<Array1<f64>>)> {
        let x = self.model_input(obs, action)?;
        let (mut pred, logvar) = self.predict_rows(x.view(), state)?;
        if let (true, Some(lv)) = (sample, logvar) {
            for (p, l) in pred.iter_mut().zip(lv.iter()) {
                let z: f64 = rng.sample(StandardNormal);
                *p += z * (0.5 * l).exp();
            }
        }
        let s = self.obs_dim;
        let mut next_obs = pred.slice(s![.., ..s]).to_owned();
        if self.target_is_delta {
            next_obs += &obs;
        }
        let reward = self.learned_rewards.then(|| pred.column(s).to_owned());
        Ok((next_obs, reward))
    }
}

impl TransitionRewardModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let cfg = self.model.config();
        let mut c = Checkpoint::default();
        c.set_meta("kind", "transition_reward_model");
        c.set_meta("obs_dim", self.obs_dim);
        c.set_meta("action_dim", self.action_dim);
        c.set_meta("target_is_delta", self.target_is_delta);
        c.set_meta("learned_rewards", self.learned_rewards);
        c.set_meta("normalize", self.normalize);
        c.set_meta("propagation", self.propagation.name());
        c.set_meta("ensemble_size", cfg.ensemble_size);
        c.set_meta("num_elites", cfg.num_elites);
        c.set_meta("hidden_size", cfg.hidden_size);
        c.set_meta("num_layers", cfg.num_layers);
        c.set_meta("activation", cfg.activation.name());
        c.set_meta("deterministic", cfg.deterministic);
        c.set_meta("normalizer_count", self.normalizer.count);
        let elites: Vec<String> = self.model.elites().iter().map(usize::to_string).collect();
        c.set_meta("elites", elites.join(","));
        c.arrays = self.model.to_arrays();
        c.arrays.push(crate::nn::NamedArray::from_array1("normalizer.mean", &self.normalizer.mean));
        c.arrays.push(crate::nn::NamedArray::from_array1("normalizer.std", &self.normalizer.std));
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.meta("kind")? != "transition_reward_model" {
            return Err(Error::parse("checkpoint does not hold a transition/reward model"));
        }
        let obs_dim: usize = c.meta_parse("obs_dim")?;
        let action_dim: usize = c.meta_parse("action_dim")?;
        let learned_rewards: bool = c.meta_parse("learned_rewards")?;
        let mut cfg = GaussianMlpConfig::new(obs_dim + action_dim, obs_dim + usize::from(learned_rewards));
        cfg.ensemble_size = c.meta_parse("ensemble_size")?;
        cfg.num_elites = c.meta_parse("num_elites")?;
        cfg.hidden_size = c.meta_parse("hidden_size")?;
        cfg.num_layers = c.meta_parse("num_layers")?;
        cfg.activation = Activation::from_name(c.meta("activation")?)?;
        cfg.deterministic = c.meta_parse("deterministic")?;
        // Parameters are overwritten below; the seed only shapes the
        // throwaway initialization.
        let mut model = GaussianMlpEnsemble::new(cfg, &mut crate::seeded_rng(0))?;
        model.load_arrays(&c.arrays)?;
        let elites = c
            .meta("elites")?
            .split(',')
            .map(|e| e.parse::<usize>().map_err(|err| Error::parse(format!("elite `{e}`: {err}"))))
            .collect::<Result<Vec<_>>>()?;
        model.set_elites(elites)?;
        let mut w = Self::new(
            model,
            obs_dim,
            action_dim,
            c.meta_parse("target_is_delta")?,
            learned_rewards,
            c.meta_parse("normalize")?,
            Propagation::from_name(c.meta("propagation")?)?,
        )?;
        w.normalizer.mean = c.array("normalizer.mean")?.to_array1()?;
        w.normalizer.std = c.array("normalizer.std")?.to_array1()?;
        w.normalizer.count = c.meta_parse("normalizer_count")?;
        if w.normalizer.mean.len() != obs_dim + action_dim || w.normalizer.std.len() != obs_dim + action_dim {
            return Err(Error::shape("normalizer statistics do not match S + A"));
        }
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
