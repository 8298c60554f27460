use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use crate::nn::{sigmoid, softplus, Activation, Adam, AdamConfig, DenseNet, GradientTape, NamedArray};
use crate::{Error, Result, SeededRng};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMlpConfig {
    pub in_size: usize,
    pub out_size: usize,
    pub hidden_size: usize,
    /// Number of linear layers per member.
    pub num_layers: usize,
    pub ensemble_size: usize,
    pub num_elites: usize,
    pub activation: Activation,
    pub deterministic: bool,
    pub optimizer: AdamConfig,
    /// Coefficient of the `Σ max_logvar - Σ min_logvar` penalty.
    pub logvar_bound_reg: f64,
    pub init_min_logvar: f64,
    pub init_max_logvar: f64,
}

impl GaussianMlpConfig {
    pub fn new(in_size: usize, out_size: usize) -> Self {
        Self {
            in_size,
            out_size,
            hidden_size: 200,
            num_layers: 4,
            ensemble_size: 7,
            num_elites: 5,
            activation: Activation::Silu,
            deterministic: false,
            optimizer: AdamConfig::default(),
            logvar_bound_reg: 0.01,
            init_min_logvar: -10.0,
            init_max_logvar: 0.5,
        }
    }
}

/// Per-member prediction heads. `logvar` is `None` for deterministic models.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberOutput {
    pub mean: Array2<f64>,
    pub logvar: Option<Array2<f64>>,
}

/// Parameter snapshot used by the trainer to restore the best weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSnapshot {
    members: Vec<DenseNet>,
    min_logvar: Array1<f64>,
    max_logvar: Array1<f64>,
}

/// Ensemble of independent MLPs, each predicting a per-dimension mean and
/// (when probabilistic) log-variance.
///
/// Raw log-variances are squashed into the learnable `[min_logvar,
/// max_logvar]` band by
/// `lv = max - softplus(max - raw); lv = min + softplus(lv - min)`.
#[derive(Debug, Clone)]
pub struct GaussianMlpEnsemble {
    config: GaussianMlpConfig,
    members: Vec<DenseNet>,
    elites: Vec<usize>,
    min_logvar: Array1<f64>,
    max_logvar: Array1<f64>,
    member_optims: Vec<Adam>,
    bound_optim: Adam,
}

struct MemberGrad {
    loss: f64,
    tape: GradientTape,
    d_min: Array1<f64>,
    d_max: Array1<f64>,
}

impl GaussianMlpEnsemble {
    pub fn new(config: GaussianMlpConfig, rng: &mut SeededRng) -> Result<Self> {
        if config.ensemble_size == 0 {
            return Err(Error::invalid("ensemble_size must be at least 1"));
        }
        if config.num_elites == 0 || config.num_elites > config.ensemble_size {
            return Err(Error::invalid(format!(
                "num_elites {} must be in 1..={}",
                config.num_elites, config.ensemble_size
            )));
        }
        let heads = if config.deterministic { 1 } else { 2 };
        let members = (0..config.ensemble_size)
            .map(|_| {
                DenseNet::mlp(
                    config.in_size,
                    config.hidden_size,
                    config.num_layers,
                    heads * config.out_size,
                    config.activation,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let d = config.out_size;
        Ok(Self {
            elites: (0..config.ensemble_size).collect(),
            min_logvar: Array1::from_elem(d, config.init_min_logvar),
            max_logvar: Array1::from_elem(d, config.init_max_logvar),
            member_optims: vec![Adam::new(config.optimizer); config.ensemble_size],
            bound_optim: Adam::new(config.optimizer),
            members,
            config,
        })
    }

    pub fn config(&self) -> &GaussianMlpConfig {
        &self.config
    }

    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }

    pub fn in_size(&self) -> usize {
        self.config.in_size
    }

    pub fn out_size(&self) -> usize {
        self.config.out_size
    }

    pub fn is_deterministic(&self) -> bool {
        self.config.deterministic
    }

    pub fn members(&self) -> &[DenseNet] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [DenseNet] {
        &mut self.members
    }

    pub fn min_logvar(&self) -> &Array1<f64> {
        &self.min_logvar
    }

    pub fn max_logvar(&self) -> &Array1<f64> {
        &self.max_logvar
    }

    pub fn set_logvar_bounds(&mut self, min: Array1<f64>, max: Array1<f64>) -> Result<()> {
        if min.len() != self.out_size() || max.len() != self.out_size() {
            return Err(Error::shape("logvar bounds must match out_size"));
        }
        self.min_logvar = min;
        self.max_logvar = max;
        Ok(())
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.optimizer.lr = lr;
        for o in self.member_optims.iter_mut().chain(std::iter::once(&mut self.bound_optim)) {
            o.config.lr = lr;
        }
    }

    pub fn elites(&self) -> &[usize] {
        &self.elites
    }

    pub fn set_elites(&mut self, elites: Vec<usize>) -> Result<()> {
        if elites.is_empty() {
            return Err(Error::invalid("elite set must be nonempty"));
        }
        if let Some(&bad) = elites.iter().find(|&&e| e >= self.ensemble_size()) {
            return Err(Error::invalid(format!("elite index {bad} out of range")));
        }
        self.elites = elites;
        Ok(())
    }

    /// Applies the soft log-variance bounds to raw head outputs.
    pub fn bound_logvar(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let mut out = raw.to_owned();
        for mut row in out.rows_mut() {
            for (d, v) in row.iter_mut().enumerate() {
                let (lo, hi) = (self.min_logvar[d], self.max_logvar[d]);
                let upper = hi - softplus(hi - *v);
                *v = lo + softplus(upper - lo);
            }
        }
        out
    }

    fn split_heads(&self, raw: Array2<f64>) -> MemberOutput {
        if self.config.deterministic {
            return MemberOutput { mean: raw, logvar: None };
        }
        let d = self.out_size();
        let mean = raw.slice(s![.., ..d]).to_owned();
        let logvar = self.bound_logvar(raw.slice(s![.., d..]));
        MemberOutput {
            mean,
            logvar: Some(logvar),
        }
    }

    pub fn member_forward(&self, member: usize, x: ArrayView2<f64>) -> Result<MemberOutput> {
        let raw = self.members[member].forward(x)?;
        Ok(self.split_heads(raw))
    }

    /// Input without an ensemble axis: every member sees the same rows.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Vec<MemberOutput>> {
        (0..self.ensemble_size()).map(|e| self.member_forward(e, x)).collect()
    }

    /// Input with an ensemble axis: member `e` sees `xs[e]`.
    pub fn forward_members(&self, xs: &[ArrayView2<f64>]) -> Result<Vec<MemberOutput>> {
        if xs.len() != self.ensemble_size() {
            return Err(Error::shape(format!(
                "ensemble axis has {} entries, model has {} members",
                xs.len(),
                self.ensemble_size()
            )));
        }
        xs.iter().enumerate().map(|(e, x)| self.member_forward(e, *x)).collect()
    }

    /// Mean of the elite members' mean predictions.
    pub fn ensemble_mean(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut acc = Array2::zeros((x.nrows(), self.out_size()));
        for &e in &self.elites {
            acc += &self.member_forward(e, x)?.mean;
        }
        Ok(acc / self.elites.len() as f64)
    }

    /// Per-member, per-dimension mean squared error of the mean head.
    pub fn eval_score(&self, x: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<Array2<f64>> {
        if target.ncols() != self.out_size() || target.nrows() != x.nrows() {
            return Err(Error::shape(format!(
                "target {:?} does not match input rows {} / out_size {}",
                target.dim(),
                x.nrows(),
                self.out_size()
            )));
        }
        let n = x.nrows() as f64;
        let mut scores = Array2::zeros((self.ensemble_size(), self.out_size()));
        for e in 0..self.ensemble_size() {
            let out = self.member_forward(e, x)?;
            let err = (&out.mean - &target).mapv(|v| v * v);
            scores.row_mut(e).assign(&(err.sum_axis(Axis(0)) / n));
        }
        Ok(scores)
    }

    fn check_pairs(&self, inputs: &[ArrayView2<f64>], targets: &[ArrayView2<f64>]) -> Result<()> {
        if inputs.len() != self.ensemble_size() || targets.len() != self.ensemble_size() {
            return Err(Error::shape(format!(
                "expected {} member batches, got {} inputs / {} targets",
                self.ensemble_size(),
                inputs.len(),
                targets.len()
            )));
        }
        for (x, t) in inputs.iter().zip(targets) {
            if x.nrows() != t.nrows() || x.nrows() == 0 || t.ncols() != self.out_size() {
                return Err(Error::shape(format!(
                    "member batch input {:?} / target {:?} incompatible with out_size {}",
                    x.dim(),
                    t.dim(),
                    self.out_size()
                )));
            }
        }
        Ok(())
    }

    /// Per-member loss: batch-mean of the Gaussian NLL (or squared error for
    /// deterministic models), summed over dimensions. Excludes the bound
    /// penalty.
    pub fn member_losses(&self, inputs: &[ArrayView2<f64>], targets: &[ArrayView2<f64>]) -> Result<Vec<f64>> {
        self.check_pairs(inputs, targets)?;
        inputs
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(e, (x, t))| {
                let out = self.member_forward(e, *x)?;
                let n = x.nrows() as f64;
                let total = match &out.logvar {
                    Some(lv) => super::gaussian_nll_loss(out.mean.view(), lv.view(), *t)?,
                    None => super::mse_loss(out.mean.view(), *t)?,
                };
                Ok(total / n)
            })
            .collect()
    }

    fn member_gradient(&mut self, e: usize, x: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<MemberGrad> {
        let d = self.out_size();
        let n = x.nrows() as f64;
        let raw = self.members[e].forward_train(x)?;
        let mut upstream = Array2::zeros(raw.dim());
        let mut d_min = Array1::zeros(d);
        let mut d_max = Array1::zeros(d);
        let mut loss = 0.0;
        for r in 0..raw.nrows() {
            for j in 0..d {
                let diff = raw[[r, j]] - target[[r, j]];
                if self.config.deterministic {
                    loss += diff * diff;
                    upstream[[r, j]] = 2.0 * diff / n;
                    continue;
                }
                let (lo, hi) = (self.min_logvar[j], self.max_logvar[j]);
                let raw_lv = raw[[r, j + d]];
                let upper = hi - softplus(hi - raw_lv);
                let lv = lo + softplus(upper - lo);
                let inv_var = (-lv).exp();
                loss += diff * diff * inv_var + lv;
                upstream[[r, j]] = 2.0 * diff * inv_var / n;
                let d_lv = (1.0 - diff * diff * inv_var) / n;
                let s_lo = sigmoid(upper - lo);
                let d_upper = d_lv * s_lo;
                d_min[j] += d_lv * (1.0 - s_lo);
                let s_hi = sigmoid(hi - raw_lv);
                upstream[[r, j + d]] = d_upper * s_hi;
                d_max[j] += d_upper * (1.0 - s_hi);
            }
        }
        let loss = loss / n;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("member {e} loss is {loss}")));
        }
        let mut tape = GradientTape::zeros_like(&self.members[e]);
        self.members[e].backward(&mut tape, upstream.view())?;
        self.members[e].clear_cache();
        Ok(MemberGrad {
            loss,
            tape,
            d_min,
            d_max,
        })
    }

    /// Total training objective: the sum of member losses plus the bound
    /// penalty (probabilistic models only).
    pub fn objective(&self, inputs: &[ArrayView2<f64>], targets: &[ArrayView2<f64>]) -> Result<f64> {
        let losses = self.member_losses(inputs, targets)?;
        Ok(losses.iter().sum::<f64>() + self.bound_penalty())
    }

    fn bound_penalty(&self) -> f64 {
        if self.config.deterministic {
            0.0
        } else {
            self.config.logvar_bound_reg * (self.max_logvar.sum() - self.min_logvar.sum())
        }
    }

    /// Gradients of [`objective`](Self::objective) for every member and the
    /// shared bounds, without applying them.
    pub fn gradients(
        &mut self,
        inputs: &[ArrayView2<f64>],
        targets: &[ArrayView2<f64>],
    ) -> Result<(Vec<f64>, Vec<GradientTape>, Array1<f64>, Array1<f64>)> {
        self.check_pairs(inputs, targets)?;
        let mut losses = Vec::with_capacity(inputs.len());
        let mut tapes = Vec::with_capacity(inputs.len());
        let d = self.out_size();
        let mut d_min = Array1::from_elem(d, -self.config.logvar_bound_reg);
        let mut d_max = Array1::from_elem(d, self.config.logvar_bound_reg);
        for (e, (x, t)) in inputs.iter().zip(targets).enumerate() {
            let g = self.member_gradient(e, *x, *t)?;
            losses.push(g.loss);
            tapes.push(g.tape);
            d_min += &g.d_min;
            d_max += &g.d_max;
        }
        Ok((losses, tapes, d_min, d_max))
    }

    /// One Adam step for every member on its own rows. Nothing is modified
    /// if any member's loss or gradient is non-finite.
    pub fn update(&mut self, inputs: &[ArrayView2<f64>], targets: &[ArrayView2<f64>]) -> Result<Vec<f64>> {
        let (losses, tapes, d_min, d_max) = self.gradients(inputs, targets)?;
        for (e, tape) in tapes.iter().enumerate() {
            if tape.slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
                return Err(Error::NonFinite(format!("member {e} gradient")));
            }
        }
        for (e, tape) in tapes.iter().enumerate() {
            let mut params = self.members[e].param_slices_mut();
            self.member_optims[e].step(&mut params, &tape.slices())?;
        }
        if !self.config.deterministic {
            let mut params = [self.min_logvar.as_slice_mut().unwrap(), self.max_logvar.as_slice_mut().unwrap()];
            self.bound_optim
                .step(&mut params, &[d_min.as_slice().unwrap(), d_max.as_slice().unwrap()])?;
        }
        Ok(losses)
    }

    pub fn snapshot(&self) -> EnsembleSnapshot {
        EnsembleSnapshot {
            members: self.members.clone(),
            min_logvar: self.min_logvar.clone(),
            max_logvar: self.max_logvar.clone(),
        }
    }

    pub fn restore(&mut self, snapshot: &EnsembleSnapshot) {
        self.members = snapshot.members.clone();
        self.min_logvar = snapshot.min_logvar.clone();
        self.max_logvar = snapshot.max_logvar.clone();
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        let mut arrays: Vec<NamedArray> = self
            .members
            .iter()
            .enumerate()
            .flat_map(|(e, m)| m.to_arrays(&format!("member{e}.")))
            .collect();
        arrays.push(NamedArray::from_array1("min_logvar", &self.min_logvar));
        arrays.push(NamedArray::from_array1("max_logvar", &self.max_logvar));
        arrays
    }

    /// Replaces parameters with arrays written by [`to_arrays`](Self::to_arrays).
    pub fn load_arrays(&mut self, arrays: &[NamedArray]) -> Result<()> {
        let mut members = Vec::with_capacity(self.ensemble_size());
        for (e, current) in self.members.iter().enumerate() {
            let net = DenseNet::from_arrays(arrays, &format!("member{e}."), current.activation())?;
            if net.layers().len() != current.layers().len()
                || net.layers().iter().zip(current.layers()).any(|(a, b)| a.weight.dim() != b.weight.dim())
            {
                return Err(Error::shape(format!("member {e} architecture differs from checkpoint")));
            }
            members.push(net);
        }
        let find = |name: &str| {
            arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::parse(format!("missing array `{name}`")))
        };
        let min = find("min_logvar")?.to_array1()?;
        let max = find("max_logvar")?.to_array1()?;
        self.members = members;
        self.set_logvar_bounds(min, max)
    }
}
