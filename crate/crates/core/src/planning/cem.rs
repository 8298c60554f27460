use std::io::Write;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result, SeededRng};

/// Variances are kept at or above this so the search never becomes a point
/// mass through numerical collapse.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Dimension-free CEM settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CemOptions {
    pub population_size: usize,
    pub num_elites: usize,
    pub num_iterations: usize,
    /// Weight kept on the previous mean and variance at each refit.
    pub alpha: f64,
    /// Return the final sampling mean rather than the best sample seen.
    pub return_mean_elites: bool,
}

impl Default for CemOptions {
    fn default() -> Self {
        Self {
            population_size: 500,
            num_elites: 50,
            num_iterations: 5,
            alpha: 0.1,
            return_mean_elites: true,
        }
    }
}

/// A fully dimensioned search over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct CemConfig {
    pub options: CemOptions,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial_var: Vec<f64>,
}

impl CemConfig {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        let o = &self.options;
        let d = self.lower.len();
        if d == 0 || self.upper.len() != d || self.initial_var.len() != d {
            return Err(Error::shape(format!(
                "bounds and variance lengths {}, {}, {}",
                d,
                self.upper.len(),
                self.initial_var.len()
            )));
        }
        if o.population_size == 0 || o.num_elites == 0 || o.num_elites > o.population_size {
            return Err(Error::invalid(format!(
                "need 1 <= num_elites ({}) <= population_size ({})",
                o.num_elites, o.population_size
            )));
        }
        if o.num_iterations == 0 {
            return Err(Error::invalid("num_iterations must be at least 1"));
        }
        if !(0.0..=1.0).contains(&o.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", o.alpha)));
        }
        for i in 0..d {
            let (l, u) = (self.lower[i], self.upper[i]);
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::invalid(format!("bad bounds [{l}, {u}] in dimension {i}")));
            }
            if !(self.initial_var[i] > 0.0) || !self.initial_var[i].is_finite() {
                return Err(Error::invalid(format!("initial variance must be positive in dimension {i}")));
            }
        }
        Ok(())
    }

    fn max_var(&self, i: usize) -> f64 {
        let half = (self.upper[i] - self.lower[i]) / 2.0;
        (half * half).max(MIN_VARIANCE)
    }
}

/// Everything that happened in one refit.
#[derive(Debug, Clone, PartialEq)]
pub struct CemIteration {
    pub iteration: usize,
    /// Indices into this iteration's population, best first.
    pub elite_indices: Vec<usize>,
    pub elite_mean: Vec<f64>,
    pub elite_var: Vec<f64>,
    /// Sampling distribution for the next iteration.
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Best value seen in any iteration so far.
    pub best_value: f64,
    pub mean_elite_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CemResult {
    pub solution: Vec<f64>,
    /// Objective at `solution`.
    pub value: f64,
    pub best_sample: Vec<f64>,
    pub best_value: f64,
    pub trace: Vec<CemIteration>,
}

fn rank_value(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::NEG_INFINITY
    }
}

/// Maximizes `objective` over the box. The objective receives an
/// `N × D` matrix of candidates and returns one value per row; non-finite
/// values rank last.
pub fn cem_optimize<F>(mut objective: F, cfg: &CemConfig, initial_mean: &[f64], rng: &mut SeededRng) -> Result<CemResult>
where
    F: FnMut(&Array2<f64>) -> Result<Vec<f64>>,
{
    cfg.validate()?;
    let d = cfg.dim();
    if initial_mean.len() != d {
        return Err(Error::shape(format!("initial mean of length {} for {d} dimensions", initial_mean.len())));
    }
    let o = &cfg.options;
    let n = o.population_size;
    let k = o.num_elites;
    let mut mean: Vec<f64> = (0..d).map(|i| initial_mean[i].clamp(cfg.lower[i], cfg.upper[i])).collect();
    let mut var: Vec<f64> = (0..d).map(|i| cfg.initial_var[i].clamp(MIN_VARIANCE, cfg.max_var(i))).collect();
    let mut best_value = f64::NEG_INFINITY;
    let mut best_sample = mean.clone();
    let mut trace = Vec::with_capacity(o.num_iterations);

    for iteration in 0..o.num_iterations {
        let mut pop = Array2::zeros((n, d));
        for r in 0..n {
            for i in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                pop[[r, i]] = (mean[i] + var[i].sqrt() * z).clamp(cfg.lower[i], cfg.upper[i]);
            }
        }
        let values = objective(&pop)?;
        if values.len() != n {
            return Err(Error::shape(format!("objective returned {} values for {n} candidates", values.len())));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| rank_value(values[b]).total_cmp(&rank_value(values[a])).then(a.cmp(&b)));
        let elites: Vec<usize> = order[..k].to_vec();

        let top = rank_value(values[elites[0]]);
        if top > best_value || (iteration == 0 && best_value == f64::NEG_INFINITY) {
            best_value = top;
            best_sample = pop.row(elites[0]).to_vec();
        }

        let mut elite_mean = vec![0.0; d];
        for &e in &elites {
            for i in 0..d {
                elite_mean[i] += pop[[e, i]];
            }
        }
        elite_mean.iter_mut().for_each(|m| *m /= k as f64);
        let mut elite_var = vec![0.0; d];
        for &e in &elites {
            for i in 0..d {
                let c = pop[[e, i]] - elite_mean[i];
                elite_var[i] += c * c;
            }
        }
        elite_var.iter_mut().for_each(|v| *v /= k as f64);

        for i in 0..d {
            mean[i] = o.alpha * mean[i] + (1.0 - o.alpha) * elite_mean[i];
            var[i] = (o.alpha * var[i] + (1.0 - o.alpha) * elite_var[i]).clamp(MIN_VARIANCE, cfg.max_var(i));
        }
        let mean_elite_value = elites.iter().map(|&e| rank_value(values[e])).sum::<f64>() / k as f64;
        trace.push(CemIteration {
            iteration,
            elite_indices: elites,
            elite_mean,
            elite_var,
            mean: mean.clone(),
            var: var.clone(),
            best_value,
            mean_elite_value,
        });
    }

    let (solution, value) = if o.return_mean_elites {
        let row = Array2::from_shape_vec((1, d), mean.clone()).expect("row vector shape");
        let v = objective(&row)?;
        if v.len() != 1 {
            return Err(Error::shape(format!("objective returned {} values for 1 candidate", v.len())));
        }
        (mean, rank_value(v[0]))
    } else {
        (best_sample.clone(), best_value)
    };
    Ok(CemResult {
        solution,
        value,
        best_sample,
        best_value,
        trace,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Writes one line per iteration:
/// `iteration,best_value,mean_elite_value,mean_norm,var_norm`.
pub fn write_trace_csv(trace: &[CemIteration], mut w: impl Write) -> Result<()> {
    writeln!(w, "iteration,best_value,mean_elite_value,mean_norm,var_norm")?;
    for it in trace {
        writeln!(
            w,
            "{},{},{},{},{}",
            it.iteration,
            it.best_value,
            it.mean_elite_value,
            norm(&it.mean),
            norm(&it.var)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn cfg(n: usize, k: usize, t: usize, var: f64, alpha: f64, lo: f64, hi: f64) -> CemConfig {
        CemConfig {
            options: CemOptions {
                population_size: n,
                num_elites: k,
                num_iterations: t,
                alpha,
                return_mean_elites: true,
            },
            lower: vec![lo],
            upper: vec![hi],
            initial_var: vec![var],
        }
    }

    fn neg_parabola(c: f64) -> impl FnMut(&Array2<f64>) -> Result<Vec<f64>> {
        move |x: &Array2<f64>| Ok(x.column(0).iter().map(|v| -(v - c) * (v - c)).collect())
    }

    #[test]
    fn finds_parabola_maximum() {
        let r = cem_optimize(neg_parabola(3.0), &cfg(500, 50, 10, 25.0, 0.0, -10.0, 10.0), &[0.0], &mut seeded_rng(0)).unwrap();
        assert!((r.solution[0] - 3.0).abs() < 0.1, "{:?}", r.solution);
        assert!(r.value <= 0.0);
    }

    #[test]
    fn respects_bounds() {
        let c = cfg(100, 10, 5, 100.0, 0.1, -1.0, 1.0);
        let r = cem_optimize(
            |x: &Array2<f64>| {
                assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
                Ok(x.column(0).to_vec())
            },
            &c,
            &[0.0],
            &mut seeded_rng(3),
        )
        .unwrap();
        assert!(r.solution[0] > 0.9);
        for it in &r.trace {
            assert!(it.var[0] <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn single_elite_at_zero_alpha_jumps_to_best() {
        let c = cfg(20, 1, 1, 1.0, 0.0, -5.0, 5.0);
        let r = cem_optimize(neg_parabola(0.7), &c, &[0.0], &mut seeded_rng(4)).unwrap();
        let it = &r.trace[0];
        assert_eq!(it.mean, it.elite_mean);
        assert_eq!(it.var[0], MIN_VARIANCE);
        assert_eq!(r.best_sample, it.mean);
    }

    #[test]
    fn full_population_refit() {
        let c = cfg(30, 30, 1, 4.0, 0.0, -100.0, 100.0);
        let mut captured = Vec::new();
        let r = cem_optimize(
            |x: &Array2<f64>| {
                if x.nrows() == 30 {
                    captured = x.column(0).to_vec();
                }
                Ok(vec![0.0; x.nrows()])
            },
            &c,
            &[1.0],
            &mut seeded_rng(5),
        )
        .unwrap();
        let m = captured.iter().sum::<f64>() / 30.0;
        let v = captured.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 30.0;
        assert!((r.trace[0].mean[0] - m).abs() < 1e-12);
        assert!((r.trace[0].var[0] - v).abs() < 1e-12);
    }

    #[test]
    fn non_finite_values_rank_last() {
        let c = cfg(50, 5, 3, 1.0, 0.0, -5.0, 5.0);
        let r = cem_optimize(
            |x: &Array2<f64>| Ok(x.column(0).iter().map(|&v| if v > 0.0 { f64::NAN } else { v }).collect()),
            &c,
            &[0.0],
            &mut seeded_rng(6),
        )
        .unwrap();
        assert!(r.best_value.is_finite());
        assert!(r.best_sample[0] <= 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let c = cfg(64, 8, 4, 2.0, 0.1, -3.0, 3.0);
        let a = cem_optimize(neg_parabola(1.0), &c, &[0.0], &mut seeded_rng(9)).unwrap();
        let b = cem_optimize(neg_parabola(1.0), &c, &[0.0], &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs() {
        let mut c = cfg(10, 11, 1, 1.0, 0.1, -1.0, 1.0);
        assert!(c.validate().is_err());
        c.options.num_elites = 2;
        c.options.alpha = 1.5;
        assert!(c.validate().is_err());
        c.options.alpha = 0.5;
        c.initial_var = vec![0.0];
        assert!(c.validate().is_err());
        c.initial_var = vec![1.0];
        assert!(c.validate().is_ok());
        assert!(cem_optimize(neg_parabola(0.0), &c, &[0.0, 1.0], &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn trace_csv_has_one_line_per_iteration() {
        let r = cem_optimize(neg_parabola(0.0), &cfg(16, 4, 3, 1.0, 0.1, -2.0, 2.0), &[0.0], &mut seeded_rng(0)).unwrap();
        let mut out = Vec::new();
        write_trace_csv(&r.trace, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("iteration,best_value"));
    }
}
