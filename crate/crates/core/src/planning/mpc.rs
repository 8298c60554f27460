use ndarray::{s, Array2, ArrayView3};
use rand::SeedableRng;

use super::cem::{cem_optimize, CemConfig, CemIteration, CemOptions};
use super::Agent;
use crate::envs::Env;
use crate::models::{Model, ModelEnv};
use crate::{Error, Result, SeededRng};

/// Scores candidate open-loop action sequences from a start observation.
pub trait TrajectoryEvaluator {
    /// `sequences` is `N × horizon × action_dim`; returns one value per
    /// sequence, with non-finite outcomes reported as `-inf`.
    fn evaluate(&mut self, obs: &[f64], sequences: ArrayView3<f64>, rng: &mut SeededRng) -> Result<Vec<f64>>;
}

/// Expected return of each sequence under `model_env`, averaged over
/// `num_particles` sampled rollouts that all start at `initial_obs`.
pub fn evaluate_action_sequences<M: Model>(
    model_env: &ModelEnv<M>,
    initial_obs: &[f64],
    sequences: ArrayView3<f64>,
    num_particles: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let (n, horizon, a) = sequences.dim();
    if num_particles == 0 {
        return Err(Error::invalid("num_particles must be at least 1"));
    }
    if n == 0 || horizon == 0 {
        return Ok(vec![0.0; n]);
    }
    let rows = n * num_particles;
    let obs0 = Array2::from_shape_fn((rows, initial_obs.len()), |(_, j)| initial_obs[j]);
    let mut state = model_env.reset(obs0, rng)?;
    let mut totals = vec![0.0; rows];
    let mut actions = Array2::zeros((rows, a));
    for t in 0..horizon {
        for seq in 0..n {
            let act = sequences.slice(s![seq, t, ..]);
            for p in 0..num_particles {
                actions.row_mut(seq * num_particles + p).assign(&act);
            }
        }
        let step = model_env.step(&mut state, actions.view(), true, rng)?;
        for (tot, r) in totals.iter_mut().zip(step.rewards.iter()) {
            *tot += r;
        }
    }
    Ok((0..n)
        .map(|seq| {
            let v = totals[seq * num_particles..(seq + 1) * num_particles].iter().sum::<f64>() / num_particles as f64;
            if v.is_finite() {
                v
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect())
}

/// Evaluates sequences with a learned model.
#[derive(Debug, Clone)]
pub struct ModelEnvEvaluator<M: Model> {
    pub model_env: ModelEnv<M>,
    pub num_particles: usize,
}

impl<M: Model> ModelEnvEvaluator<M> {
    pub fn new(model_env: ModelEnv<M>, num_particles: usize) -> Self {
        Self {
            model_env,
            num_particles,
        }
    }
}

impl<M: Model> TrajectoryEvaluator for ModelEnvEvaluator<M> {
    fn evaluate(&mut self, obs: &[f64], sequences: ArrayView3<f64>, rng: &mut SeededRng) -> Result<Vec<f64>> {
        evaluate_action_sequences(&self.model_env, obs, sequences, self.num_particles, rng)
    }
}

/// Evaluates sequences by replaying them on copies of a real environment
/// whose state is set to the observation.
pub struct TrueEnvEvaluator {
    env: Box<dyn Env>,
}

impl TrueEnvEvaluator {
    pub fn new(env: Box<dyn Env>) -> Self {
        Self { env }
    }
}

impl TrajectoryEvaluator for TrueEnvEvaluator {
    fn evaluate(&mut self, obs: &[f64], sequences: ArrayView3<f64>, _rng: &mut SeededRng) -> Result<Vec<f64>> {
        let (n, horizon, _) = sequences.dim();
        let mut values = Vec::with_capacity(n);
        for seq in 0..n {
            let mut env = self.env.clone();
            env.set_state(obs);
            let mut total = 0.0;
            for t in 0..horizon {
                let act = sequences.slice(s![seq, t, ..]).to_vec();
                let step = env.step(&act);
                total += step.reward;
                if step.done {
                    break;
                }
            }
            values.push(if total.is_finite() { total } else { f64::NEG_INFINITY });
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub horizon: usize,
    pub cem: CemOptions,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Per-action-dimension starting variance; defaults to a quarter of the
    /// box half-width squared.
    pub initial_var: Option<Vec<f64>>,
    /// Start each solve from the previous plan shifted by one step.
    pub warm_start: bool,
}

impl MpcConfig {
    pub fn new(horizon: usize, cem: CemOptions, action_low: Vec<f64>, action_high: Vec<f64>) -> Self {
        Self {
            horizon,
            cem,
            action_low,
            action_high,
            initial_var: None,
            warm_start: true,
        }
    }

    fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    fn cem_config(&self) -> Result<CemConfig> {
        let a = self.action_dim();
        if a == 0 || self.action_high.len() != a {
            return Err(Error::shape("action bounds must be non-empty and of equal length"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("planning horizon must be at least 1"));
        }
        let per_step: Vec<f64> = match &self.initial_var {
            Some(v) if v.len() == a => v.clone(),
            Some(v) => return Err(Error::shape(format!("initial variance of length {} for {a} actions", v.len()))),
            None => (0..a)
                .map(|i| {
                    let w = self.action_high[i] - self.action_low[i];
                    w * w / 16.0
                })
                .collect(),
        };
        let tile = |v: &[f64]| -> Vec<f64> { (0..self.horizon).flat_map(|_| v.iter().copied()).collect() };
        Ok(CemConfig {
            options: self.cem.clone(),
            lower: tile(&self.action_low),
            upper: tile(&self.action_high),
            initial_var: tile(&per_step),
        })
    }

    fn center(&self) -> Vec<f64> {
        self.action_low.iter().zip(&self.action_high).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}

/// Receding-horizon controller: solve for a sequence, execute its first
/// action, re-plan at the next step.
pub struct TrajectoryOptimizerAgent<E: TrajectoryEvaluator> {
    config: MpcConfig,
    cem: CemConfig,
    evaluator: E,
    previous: Option<Array2<f64>>,
    last_trace: Vec<CemIteration>,
}

impl<E: TrajectoryEvaluator> TrajectoryOptimizerAgent<E> {
    pub fn new(config: MpcConfig, evaluator: E) -> Result<Self> {
        let cem = config.cem_config()?;
        cem.validate()?;
        Ok(Self {
            config,
            cem,
            evaluator,
            previous: None,
            last_trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn evaluator(&self) -> &E {
        &self.evaluator
    }

    pub fn evaluator_mut(&mut self) -> &mut E {
        &mut self.evaluator
    }

    /// Optimizer trace from the most recent plan.
    pub fn last_trace(&self) -> &[CemIteration] {
        &self.last_trace
    }

    fn initial_mean(&self) -> Vec<f64> {
        let a = self.config.action_dim();
        let h = self.config.horizon;
        let center = self.config.center();
        match (&self.previous, self.config.warm_start) {
            (Some(prev), true) => {
                let mut m = Vec::with_capacity(h * a);
                for t in 1..h {
                    m.extend(prev.row(t).iter().copied());
                }
                m.extend(center.iter().copied());
                m
            }
            _ => (0..h).flat_map(|_| center.iter().copied()).collect(),
        }
    }
}

impl<E: TrajectoryEvaluator> Agent for TrajectoryOptimizerAgent<E> {
    fn act(&mut self, obs: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        Ok(self.plan(obs, rng)?.row(0).to_vec())
    }

    fn plan(&mut self, obs: &[f64], rng: &mut SeededRng) -> Result<Array2<f64>> {
        let h = self.config.horizon;
        let a = self.config.action_dim();
        let init = self.initial_mean();
        let mut eval_rng = SeededRng::from_rng(&mut *rng);
        let evaluator = &mut self.evaluator;
        let result = cem_optimize(
            |pop: &Array2<f64>| {
                let n = pop.nrows();
                let seqs = pop.view().into_shape_with_order((n, h, a)).map_err(|e| Error::shape(e.to_string()))?;
                evaluator.evaluate(obs, seqs, &mut eval_rng)
            },
            &self.cem,
            &init,
            rng,
        )?;
        let plan = Array2::from_shape_vec((h, a), result.solution).map_err(|e| Error::shape(e.to_string()))?;
        self.previous = Some(plan.clone());
        self.last_trace = result.trace;
        Ok(plan)
    }

    fn reset(&mut self) {
        self.previous = None;
        self.last_trace.clear();
    }
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array1, Array3, ArrayView2};

    use super::*;
    use crate::envs::{no_termination, CartPole};
    use crate::models::ModelState;
    use crate::seeded_rng;

    /// Exact integrator `x' = x + a` with one particle state.
    #[derive(Debug, Clone)]
    struct Shift;

    impl Model for Shift {
        type Snapshot = ();
        fn ensemble_size(&self) -> usize {
            1
        }
        fn loss(&self, _: &crate::data::EnsembleBatch) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
        fn update(&mut self, _: &crate::data::EnsembleBatch) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
        fn eval_score(&self, b: &crate::data::TransitionBatch) -> Result<Array2<f64>> {
            Ok(Array2::zeros((1, b.obs_dim())))
        }
        fn elites(&self) -> &[usize] {
            &[0]
        }
        fn set_elites(&mut self, _: Vec<usize>) -> Result<()> {
            Ok(())
        }
        fn num_elites(&self) -> usize {
            1
        }
        fn snapshot(&self) {}
        fn restore(&mut self, _: &()) {}
        fn reset(&self, obs: ArrayView2<f64>, _: &mut SeededRng) -> Result<ModelState> {
            Ok(ModelState {
                assignment: vec![0; obs.nrows()],
            })
        }
        fn sample(
            &self,
            obs: ArrayView2<f64>,
            action: ArrayView2<f64>,
            _: &ModelState,
            _: &mut SeededRng,
            _: bool,
        ) -> Result<(Array2<f64>, Option<Array1<f64>>)> {
            Ok((&obs + &action, None))
        }
    }

    fn reward_x(_a: ArrayView2<f64>, next: ArrayView2<f64>) -> Array1<f64> {
        next.column(0).to_owned()
    }

    #[test]
    fn sequence_values_sum_rewards() {
        let env = ModelEnv::new(Shift, no_termination, Some(reward_x));
        let seqs = Array3::from_shape_vec((2, 3, 1), vec![1.0, 1.0, 1.0, -1.0, 0.0, 2.0]).unwrap();
        let v = evaluate_action_sequences(&env, &[0.5], seqs.view(), 4, &mut seeded_rng(0)).unwrap();
        // x runs 1.5, 2.5, 3.5 and -0.5, -0.5, 1.5.
        assert_eq!(v, vec![7.5, 0.5]);
    }

    #[test]
    fn warm_start_shifts_previous_plan() {
        let env = ModelEnv::new(Shift, no_termination, Some(reward_x));
        let cfg = MpcConfig::new(
            3,
            CemOptions {
                population_size: 8,
                num_elites: 2,
                num_iterations: 1,
                alpha: 0.1,
                return_mean_elites: true,
            },
            vec![-1.0],
            vec![1.0],
        );
        let mut agent = TrajectoryOptimizerAgent::new(cfg, ModelEnvEvaluator::new(env, 1)).unwrap();
        assert_eq!(agent.initial_mean(), vec![0.0, 0.0, 0.0]);
        let plan = agent.plan(&[0.0], &mut seeded_rng(1)).unwrap();
        assert_eq!(agent.initial_mean(), vec![plan[[1, 0]], plan[[2, 0]], 0.0]);
        agent.reset();
        assert_eq!(agent.initial_mean(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn same_seed_same_action() {
        let build = || {
            let env = ModelEnv::new(Shift, no_termination, Some(reward_x));
            let cfg = MpcConfig::new(4, CemOptions::default(), vec![-1.0], vec![1.0]);
            TrajectoryOptimizerAgent::new(cfg, ModelEnvEvaluator::new(env, 2)).unwrap()
        };
        let a = build().act(&[0.1], &mut seeded_rng(5)).unwrap();
        let b = build().act(&[0.1], &mut seeded_rng(5)).unwrap();
        assert_eq!(a, b);
        assert!(a[0] > 0.5, "pushing x up should be planned, got {a:?}");
    }

    #[test]
    fn true_env_evaluator_stops_at_termination() {
        let mut ev = TrueEnvEvaluator::new(Box::new(CartPole::new()));
        let seqs = Array3::from_elem((1, 50, 1), 1.0);
        let start = [0.0, 0.0, 0.25, 0.0];
        let v = ev.evaluate(&start, seqs.view(), &mut seeded_rng(0)).unwrap();
        assert_eq!(v, vec![0.0]);
        let calm = ev.evaluate(&[0.0; 4], Array3::zeros((1, 5, 1)).view(), &mut seeded_rng(0)).unwrap();
        assert_eq!(calm, vec![5.0]);
    }

    #[test]
    fn rejects_bad_config() {
        let env = ModelEnv::new(Shift, no_termination, Some(reward_x));
        let mut cfg = MpcConfig::new(0, CemOptions::default(), vec![-1.0], vec![1.0]);
        assert!(TrajectoryOptimizerAgent::new(cfg.clone(), ModelEnvEvaluator::new(env.clone(), 1)).is_err());
        cfg.horizon = 2;
        cfg.initial_var = Some(vec![1.0, 1.0]);
        assert!(TrajectoryOptimizerAgent::new(cfg, ModelEnvEvaluator::new(env, 1)).is_err());
        let _ = array![[0.0]];
    }
}
