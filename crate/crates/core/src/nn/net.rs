use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use super::checkpoint::NamedArray;
use crate::{Error, Result, SeededRng};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu(x),
            Activation::Relu => relu(x),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => silu_derivative(x),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Silu => "silu",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "silu" => Ok(Activation::Silu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::UnknownName {
                kind: "activation",
                name: other.to_string(),
                available: "silu, relu".into(),
            }),
        }
    }
}

/// Affine layer `y = x W^T + b` with `W` stored out×in.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Truncated normal with std `1/sqrt(2 fan_in)`, resampled outside 2σ.
    pub fn init(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let std = 1.0 / (2.0 * inputs as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((outputs, inputs), || loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * std;
            }
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone)]
struct ForwardCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre_activations: Vec<Array2<f64>>,
}

/// Gradients congruent with a [`DenseNet`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub layers: Vec<Linear>,
}

impl GradientTape {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Linear::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

/// Fully connected network; every layer but the last is followed by the
/// activation.
#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Linear>,
    activation: Activation,
    cache: Option<ForwardCache>,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.activation == other.activation && self.layers == other.layers
    }
}

impl DenseNet {
    /// Builds a network through the given layer widths, e.g. `[in, h, h, out]`
    /// gives three linear layers.
    pub fn new(sizes: &[usize], activation: Activation, rng: &mut SeededRng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect();
        Ok(Self {
            layers,
            activation,
            cache: None,
        })
    }

    /// `num_layers` linear layers: in→hidden, hidden→hidden…, hidden→out.
    pub fn mlp(
        inputs: usize,
        hidden: usize,
        num_layers: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::invalid("num_layers must be at least 1"));
        }
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(hidden, num_layers - 1));
        sizes.push(outputs);
        Self::new(&sizes, activation, rng)
    }

    pub fn from_layers(layers: Vec<Linear>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].outputs(),
                    i + 1,
                    w[1].inputs()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::shape(format!("layer {i} bias length {} != {}", l.bias.len(), l.outputs())));
            }
        }
        Ok(Self {
            layers,
            activation,
            cache: None,
        })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.outputs() * l.inputs() + l.outputs()).sum()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_size() {
            return Err(Error::shape(format!(
                "network expects {} input columns, got {}",
                self.input_size(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h.mapv_inplace(|v| self.activation.apply(v));
            h = layer.forward(h.view());
        }
        Ok(h)
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_train(&mut self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(h.view());
            inputs.push(h);
            if i == last {
                h = z;
            } else {
                h = z.mapv(|v| self.activation.apply(v));
                pre.push(z);
            }
        }
        self.cache = Some(ForwardCache {
            inputs,
            pre_activations: pre,
        });
        Ok(h)
    }

    /// Writes `d(loss)/d(params)` into `tape` given `d(loss)/d(output)` for
    /// the batch of the most recent [`forward_train`](Self::forward_train).
    /// The tape is zeroed first. Returns `d(loss)/d(input)`.
    pub fn backward(&self, tape: &mut GradientTape, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cache = self.cache.as_ref().ok_or(Error::NoForwardCache)?;
        let rows = cache.inputs[0].nrows();
        if upstream.dim() != (rows, self.output_size()) {
            return Err(Error::shape(format!(
                "upstream gradient {:?} does not match cached output ({rows}, {})",
                upstream.dim(),
                self.output_size()
            )));
        }
        if tape.layers.len() != self.layers.len()
            || tape
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weight.dim() != l.weight.dim())
        {
            return Err(Error::shape("gradient tape is not congruent with the network"));
        }
        tape.zero();
        let mut g = upstream.to_owned();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                let z = &cache.pre_activations[i];
                g.zip_mut_with(z, |gv, &zv| *gv *= self.activation.derivative(zv));
            }
            let grad = &mut tape.layers[i];
            grad.weight.assign(&g.t().dot(&cache.inputs[i]));
            grad.bias.assign(&g.sum_axis(Axis(0)));
            g = g.dot(&self.layers[i].weight);
        }
        Ok(g)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let Linear { weight, bias } = l;
                [weight.as_slice_mut().unwrap(), bias.as_slice_mut().unwrap()]
            })
            .collect()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    pub fn to_arrays(&self, prefix: &str) -> Vec<NamedArray> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    NamedArray::from_array2(format!("{prefix}layer{i}.weight"), &l.weight),
                    NamedArray::from_array1(format!("{prefix}layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    /// Rebuilds a network from arrays written by [`to_arrays`](Self::to_arrays).
    pub fn from_arrays(arrays: &[NamedArray], prefix: &str, activation: Activation) -> Result<Self> {
        let find = |name: String| {
            arrays
                .iter()
                .find(|a| a.name == name)
                .ok_or_else(|| Error::parse(format!("missing array `{name}`")))
        };
        let mut layers = Vec::new();
        let mut i = 0;
        while arrays.iter().any(|a| a.name == format!("{prefix}layer{i}.weight")) {
            let weight = find(format!("{prefix}layer{i}.weight"))?.to_array2()?;
            let bias = find(format!("{prefix}layer{i}.bias"))?.to_array1()?;
            layers.push(Linear { weight, bias });
            i += 1;
        }
        Self::from_layers(layers, activation)
    }
}
