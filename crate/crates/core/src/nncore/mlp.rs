use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use super::rng::Rng;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Fully connected network `ϑ_i = σ_i(W_i ϑ_{i-1} + b_i)` whose last layer is affine.
///
/// Flattened parameters are ordered layer by layer, the weight in row-major order
/// followed by the bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MlpDoc", into = "MlpDoc")]
pub struct Mlp {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct MlpDoc {
    layers: Vec<Layer>,
}

impl TryFrom<MlpDoc> for Mlp {
    type Error = Error;
    fn try_from(doc: MlpDoc) -> Result<Self> {
        Mlp::new(doc.layers)
    }
}

impl From<Mlp> for MlpDoc {
    fn from(m: Mlp) -> Self {
        MlpDoc { layers: m.layers }
    }
}

/// Layer outputs of one forward pass; `values[0]` is the input.
#[derive(Clone, Debug)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.rows() {
                return Err(Error::shape(format!("layer {i} bias"), l.weight.rows(), l.bias.len()));
            }
            if l.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} bias")));
            }
            if i > 0 && layers[i - 1].weight.rows() != l.weight.cols() {
                return Err(Error::shape(
                    format!("layer {i} weight columns"),
                    layers[i - 1].weight.rows(),
                    l.weight.cols(),
                ));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::Parameter("final layer must use the identity activation".into()));
        }
        Ok(Mlp { layers })
    }

    /// Tanh hidden layers of the given widths and an affine output layer, all
    /// parameters zero.
    pub fn zeros(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for (i, &h) in hidden.iter().chain(std::iter::once(&output_dim)).enumerate() {
            let activation = if i < hidden.len() {
                Activation::Tanh
            } else {
                Activation::Identity
            };
            layers.push(Layer {
                weight: Matrix::zeros(h, prev),
                bias: vec![0.0; h],
                activation,
            });
            prev = h;
        }
        Mlp { layers }
    }

    /// Glorot-uniform weights `U(−a, a)` with `a = √(6 / (fan_in + fan_out))`,
    /// zero biases.
    pub fn glorot(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut Rng) -> Self {
        let mut net = Mlp::zeros(input_dim, hidden, output_dim);
        for layer in &mut net.layers {
            let (fan_out, fan_in) = layer.weight.shape();
            let a = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
            for w in layer.weight.as_mut_slice() {
                *w = rng.random_range(-a..a);
            }
        }
        net
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.rows() * (l.weight.cols() + 1))
            .sum()
    }

    /// Zeroes weight and bias of the output layer so the network is the zero map.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().unwrap();
        last.weight.as_mut_slice().fill(0.0);
        last.bias.fill(0.0);
    }

    /// True when every output-layer parameter is zero, i.e. the network is
    /// identically zero.
    pub fn is_zero_map(&self) -> bool {
        let last = self.layers.last().unwrap();
        last.weight.as_slice().iter().all(|w| *w == 0.0) && last.bias.iter().all(|b| *b == 0.0)
    }

    /// Right-multiplies the first layer's weight by `diag(scale)`, so the new
    /// network evaluated at `x` equals the old one at `scale ⊙ x`.
    pub fn absorb_input_scaling(&mut self, scale: &[f64]) -> Result<()> {
        let w = &mut self.layers[0].weight;
        if scale.len() != w.cols() {
            return Err(Error::shape("input scaling", w.cols(), scale.len()));
        }
        for i in 0..w.rows() {
            for (j, s) in scale.iter().enumerate() {
                w.set(i, j, w.get(i, j) * s);
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape("network parameters", self.num_params(), params.len()));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weight.rows() * l.weight.cols();
            l.weight
                .as_mut_slice()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.trace(input)?;
        Ok(trace.values.pop().unwrap())
    }

    /// Forward pass keeping every layer output for a later backward pass.
    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        if input.len() != self.input_dim() {
            return Err(Error::shape("layer 0 input", self.input_dim(), input.len()));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let prev = values.last().unwrap();
            let out: Vec<f64> = (0..layer.weight.rows())
                .map(|i| layer.activation.apply(dot(layer.weight.row(i), prev) + layer.bias[i]))
                .collect();
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Adds the gradient of `⟨cotangent, output⟩` with respect to the flattened
    /// parameters into `param_grad` and returns the gradient with respect to the
    /// input.
    pub fn accumulate_gradient(
        &self,
        trace: &Trace,
        cotangent: &[f64],
        param_grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if cotangent.len() != self.output_dim() {
            return Err(Error::shape("output cotangent", self.output_dim(), cotangent.len()));
        }
        if param_grad.len() != self.num_params() {
            return Err(Error::shape("parameter gradient", self.num_params(), param_grad.len()));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut offset = 0;
        for l in &self.layers {
            offsets.push(offset);
            offset += l.weight.rows() * (l.weight.cols() + 1);
        }

        let mut delta = cotangent.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let out = &trace.values[li + 1];
            let inp = &trace.values[li];
            for (d, o) in delta.iter_mut().zip(out) {
                *d *= layer.activation.derivative_from_output(*o);
            }
            let (rows, cols) = layer.weight.shape();
            let base = offsets[li];
            for i in 0..rows {
                let d = delta[i];
                if d != 0.0 {
                    let g = &mut param_grad[base + i * cols..base + (i + 1) * cols];
                    for (gj, xj) in g.iter_mut().zip(inp) {
                        *gj += d * xj;
                    }
                }
                param_grad[base + rows * cols + i] += d;
            }
            delta = layer.weight.tr_mul_vec(&delta)?;
        }
        Ok(delta)
    }

    /// Gradient of `⟨cotangent, forward(input)⟩` with respect to the flattened
    /// parameters and to the input.
    pub fn backward(&self, input: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let trace = self.trace(input)?;
        let mut grad = vec![0.0; self.num_params()];
        let input_grad = self.accumulate_gradient(&trace, cotangent, &mut grad)?;
        Ok((grad, input_grad))
    }
}
