use std::fmt::Write as _;

use super::read_float_csv;
use crate::envs::Env;
use crate::planning::{Agent, MpcConfig, TrajectoryOptimizerAgent, TrueEnvEvaluator};
use crate::{Error, Result, SeededRng};

pub const EPISODE_HEADER: &str = "episode,return,steps";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode_return: f64,
    /// Per-step rewards in order.
    pub rewards: Vec<f64>,
}

/// CEM model-predictive control where candidates are scored on copies of
/// the real environment. Each episode starts from `initial_state` when
/// given, otherwise from a reset, and runs to termination or the trial
/// length.
pub fn true_env_cem_control(
    env: &mut dyn Env,
    mpc: MpcConfig,
    episodes: usize,
    initial_state: Option<&[f64]>,
    rng: &mut SeededRng,
) -> Result<Vec<EpisodeLog>> {
    let trial_length = env.spec().trial_length;
    let mut agent = TrajectoryOptimizerAgent::new(mpc, TrueEnvEvaluator::new(env.box_clone()))?;
    let mut logs = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        if let Some(s) = initial_state {
            if s.len() != obs.len() {
                return Err(Error::shape(format!("initial state of length {} for obs dim {}", s.len(), obs.len())));
            }
            env.set_state(s);
            obs = s.to_vec();
        }
        agent.reset();
        let mut rewards = Vec::new();
        for _ in 0..trial_length {
            let a = agent.act(&obs, rng)?;
            let step = env.step(&a);
            rewards.push(step.reward);
            obs = step.obs;
            if step.done {
                break;
            }
        }
        logs.push(EpisodeLog {
            episode_return: rewards.iter().sum(),
            rewards,
        });
    }
    Ok(logs)
}

pub fn write_episode_csv(logs: &[EpisodeLog]) -> String {
    let mut out = format!("{EPISODE_HEADER}\n");
    for (i, l) in logs.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, l.episode_return, l.rewards.len());
    }
    out
}

/// Parses the output of [`write_episode_csv`] into `(return, steps)` pairs.
pub fn read_episode_csv(text: &str) -> Result<Vec<(f64, usize)>> {
    Ok(read_float_csv(text, EPISODE_HEADER)?
        .into_iter()
        .map(|r| (r[1], r[2] as usize))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::CartPole;
    use crate::planning::CemOptions;
    use crate::seeded_rng;

    #[test]
    fn zero_episodes_is_empty() {
        let mut env = CartPole::new();
        let mpc = MpcConfig::new(5, CemOptions::default(), vec![-1.0], vec![1.0]);
        let logs = true_env_cem_control(&mut env, mpc, 0, None, &mut seeded_rng(0)).unwrap();
        assert!(logs.is_empty());
        assert_eq!(write_episode_csv(&logs), format!("{EPISODE_HEADER}\n"));
    }

    #[test]
    fn episode_csv_round_trip() {
        let logs = vec![
            EpisodeLog {
                episode_return: 3.5,
                rewards: vec![1.0, 2.5],
            },
            EpisodeLog {
                episode_return: -0.1,
                rewards: vec![-0.1],
            },
        ];
        assert_eq!(read_episode_csv(&write_episode_csv(&logs)).unwrap(), vec![(3.5, 2), (-0.1, 1)]);
    }
}
