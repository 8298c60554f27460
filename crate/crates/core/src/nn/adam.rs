use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Bias-corrected Adam over a list of flat parameter slices. Moment buffers
/// are created on the first step and shape-checked afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::shape("parameter and gradient lists are not congruent"));
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {i}[{j}] = {}", g[j])));
            }
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() || self.m.iter().zip(grads).any(|(m, g)| m.len() != g.len()) {
            return Err(Error::shape("gradients do not match the optimizer's moment buffers"));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.len() {
                let gk = g[k] + weight_decay * p[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_step(adam: &mut Adam, theta: &mut f64, grad: f64) -> Result<()> {
        let mut p = [*theta];
        adam.step(&mut [&mut p[..]], &[&[grad][..]])?;
        *theta = p[0];
        Ok(())
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let mut theta = 1.5;
        scalar_step(&mut adam, &mut theta, 0.0).unwrap();
        assert_eq!(theta, 1.5);
        assert_eq!(adam.step_count(), 1);
        scalar_step(&mut adam, &mut theta, 0.0).unwrap();
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for g in [3.0, -0.02, 1e3] {
            let mut adam = Adam::new(AdamConfig::with_lr(1e-3));
            let mut theta = 0.0;
            scalar_step(&mut adam, &mut theta, g).unwrap();
            let expected = -1e-3 * g / (g.abs() + 1e-8);
            assert!((theta - expected).abs() < 1e-15);
            assert!((theta.abs() - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn descends_quadratic() {
        let mut adam = Adam::new(AdamConfig::with_lr(0.1));
        let mut theta = 1.0;
        for _ in 0..200 {
            let g = 2.0 * theta;
            scalar_step(&mut adam, &mut theta, g).unwrap();
        }
        assert!(theta.abs() < 1e-2, "theta {theta}");
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut theta = 2.0;
        assert!(matches!(scalar_step(&mut adam, &mut theta, f64::NAN), Err(Error::NonFinite(_))));
        assert_eq!(theta, 2.0);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn shape_changes_rejected() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = [0.0, 0.0];
        adam.step(&mut [&mut p[..]], &[&[1.0, 1.0][..]]).unwrap();
        let mut q = [0.0];
        assert!(adam.step(&mut [&mut q[..]], &[&[1.0][..]]).is_err());
    }
}
