use ndarray::Array2;
use rand::Rng;

use crate::{Error, Result, SeededRng};

/// Anything that maps an observation to an action.
pub trait Agent {
    fn act(&mut self, obs: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>>;

    /// The full planned action sequence (`horizon × action_dim`); agents that
    /// do not plan return their single action.
    fn plan(&mut self, obs: &[f64], rng: &mut SeededRng) -> Result<Array2<f64>> {
        let a = self.act(obs, rng)?;
        let n = a.len();
        Ok(Array2::from_shape_vec((1, n), a).expect("row vector shape"))
    }

    /// Clears per-episode state.
    fn reset(&mut self) {}
}

/// Samples uniformly from the action box.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl RandomAgent {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::shape(format!("action bounds of length {} and {}", low.len(), high.len())));
        }
        if low.iter().zip(&high).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::invalid("action bounds must be finite with low <= high"));
        }
        Ok(Self { low, high })
    }
}

impl Agent for RandomAgent {
    fn act(&mut self, _obs: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        Ok(self
            .low
            .iter()
            .zip(&self.high)
            .map(|(&l, &h)| l + (h - l) * rng.random::<f64>())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn stays_in_box() {
        let mut agent = RandomAgent::new(vec![-1.0, 0.0], vec![1.0, 0.5]).unwrap();
        let mut rng = seeded_rng(0);
        for _ in 0..1000 {
            let a = agent.act(&[], &mut rng).unwrap();
            assert!((-1.0..=1.0).contains(&a[0]));
            assert!((0.0..=0.5).contains(&a[1]));
        }
    }

    #[test]
    fn degenerate_box_returns_the_point() {
        let mut agent = RandomAgent::new(vec![0.0], vec![0.0]).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..10 {
            assert_eq!(agent.act(&[], &mut rng).unwrap(), vec![0.0]);
        }
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(RandomAgent::new(vec![1.0], vec![0.0]).is_err());
        assert!(RandomAgent::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn default_plan_is_single_row() {
        let mut agent = RandomAgent::new(vec![-1.0], vec![1.0]).unwrap();
        let plan = agent.plan(&[0.0], &mut seeded_rng(2)).unwrap();
        assert_eq!(plan.dim(), (1, 1));
    }
}
