use crate::data::{ReplayBuffer, Transition};
use crate::envs::Env;
use crate::planning::Agent;
use crate::{Error, Result, SeededRng};

/// Runs `agent` in `env` for exactly `num_steps` steps, resetting whenever an
/// episode terminates or reaches the env's trial length. Stored `done` flags
/// are set on exactly the transitions after which the env was reset.
pub fn rollout_agent_trajectories(
    env: &mut dyn Env,
    num_steps: usize,
    agent: &mut dyn Agent,
    mut buffer: Option<&mut ReplayBuffer>,
    rng: &mut SeededRng,
) -> Result<usize> {
    if num_steps == 0 {
        return Ok(0);
    }
    let spec = env.spec().clone();
    if let Some(b) = buffer.as_deref() {
        if b.obs_dim() != spec.obs_dim || b.action_dim() != spec.action_dim {
            return Err(Error::shape(format!(
                "buffer stores {}/{} dims, env has {}/{}",
                b.obs_dim(),
                b.action_dim(),
                spec.obs_dim,
                spec.action_dim
            )));
        }
    }
    let mut obs = env.reset(rng);
    agent.reset();
    let mut episode_steps = 0;
    for _ in 0..num_steps {
        let action = agent.act(&obs, rng)?;
        if action.len() != spec.action_dim {
            return Err(Error::shape(format!("agent produced {} actions, env expects {}", action.len(), spec.action_dim)));
        }
        let step = env.step(&action);
        episode_steps += 1;
        let reset = step.done || episode_steps >= spec.trial_length;
        if let Some(b) = buffer.as_deref_mut() {
            b.add(&Transition {
                obs: obs.clone(),
                action,
                next_obs: step.obs.clone(),
                reward: step.reward,
                done: reset,
            })?;
        }
        if reset {
            obs = env.reset(rng);
            agent.reset();
            episode_steps = 0;
        } else {
            obs = step.obs;
        }
    }
    Ok(num_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CartPole, EnvSpec, EnvStep};
    use crate::planning::RandomAgent;
    use crate::seeded_rng;

    /// Counts up and terminates on its third step.
    #[derive(Clone)]
    struct ThreeStep {
        spec: EnvSpec,
        t: usize,
    }

    impl ThreeStep {
        fn new() -> Self {
            Self {
                spec: EnvSpec {
                    name: "three_step",
                    obs_dim: 1,
                    action_dim: 1,
                    action_low: vec![-1.0],
                    action_high: vec![1.0],
                    trial_length: 100,
                    dt: 1.0,
                },
                t: 0,
            }
        }
    }

    impl Env for ThreeStep {
        fn spec(&self) -> &EnvSpec {
            &self.spec
        }
        fn reset(&mut self, _: &mut SeededRng) -> Vec<f64> {
            self.t = 0;
            vec![0.0]
        }
        fn step(&mut self, _: &[f64]) -> EnvStep {
            self.t += 1;
            EnvStep {
                obs: vec![self.t as f64],
                reward: 1.0,
                done: self.t == 3,
            }
        }
        fn state(&self) -> Vec<f64> {
            vec![self.t as f64]
        }
        fn set_state(&mut self, s: &[f64]) {
            self.t = s[0] as usize;
        }
        fn box_clone(&self) -> Box<dyn Env> {
            Box::new(self.clone())
        }
    }

    #[test]
    fn zero_steps_leave_buffer_untouched() {
        let mut env = CartPole::new();
        let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
        let mut buf = ReplayBuffer::new(10, 4, 1).unwrap();
        let n = rollout_agent_trajectories(&mut env, 0, &mut agent, Some(&mut buf), &mut seeded_rng(0)).unwrap();
        assert_eq!(n, 0);
        assert!(buf.is_empty());
    }

    #[test]
    fn collects_exact_count() {
        let mut env = CartPole::new();
        let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
        let mut buf = ReplayBuffer::new(5000, 4, 1).unwrap();
        let n = rollout_agent_trajectories(&mut env, 5000, &mut agent, Some(&mut buf), &mut seeded_rng(1)).unwrap();
        assert_eq!((n, buf.len()), (5000, 5000));
    }

    #[test]
    fn done_flags_mark_resets() {
        let mut env = ThreeStep::new();
        let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
        let mut buf = ReplayBuffer::new(20, 1, 1).unwrap();
        rollout_agent_trajectories(&mut env, 8, &mut agent, Some(&mut buf), &mut seeded_rng(2)).unwrap();
        let dones: Vec<bool> = buf.iter_ordered().map(|t| t.done).collect();
        assert_eq!(dones, vec![false, false, true, false, false, true, false, false]);
        let obs: Vec<f64> = buf.iter_ordered().map(|t| t.obs[0]).collect();
        assert_eq!(obs, vec![0.0, 1.0, 2.0, 0.0, 1.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn truncation_also_resets() {
        let mut env = CartPole::with_trial_length(5);
        let mut agent = RandomAgent::new(vec![0.0], vec![0.0]).unwrap();
        let mut buf = ReplayBuffer::new(20, 4, 1).unwrap();
        rollout_agent_trajectories(&mut env, 10, &mut agent, Some(&mut buf), &mut seeded_rng(3)).unwrap();
        let dones: Vec<usize> = buf.iter_ordered().enumerate().filter(|(_, t)| t.done).map(|(i, _)| i).collect();
        assert_eq!(dones, vec![4, 9]);
    }

    #[test]
    fn mismatched_buffer_rejected() {
        let mut env = CartPole::new();
        let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
        let mut buf = ReplayBuffer::new(10, 3, 1).unwrap();
        assert!(rollout_agent_trajectories(&mut env, 1, &mut agent, Some(&mut buf), &mut seeded_rng(0)).is_err());
    }
}
