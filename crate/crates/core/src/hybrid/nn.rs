//! Dense feed-forward networks with hand-written backpropagation.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn slope<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Multi-layer perceptron; hidden layers use `hidden`, the last layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
    pub hidden: Activation,
}

/// Layer outputs of one forward pass, input first.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub values: Vec<Vec<T>>,
}

impl<T> Trace<T> {
    pub fn output(&self) -> &[T] {
        self.values.last().expect("trace holds the input")
    }
}

/// Layer widths and activation of a network; the checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub widths: Vec<usize>,
    pub activation: Activation,
}

impl<T: Scalar> Mlp<T> {
    /// Uniform Glorot initialisation; biases start at zero.
    pub fn new(widths: &[usize], hidden: Activation, rng: &mut impl Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Contract(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| T::lit(rng.random_range(-limit..limit))).collect(),
                    bias: vec![T::zero(); w[1]],
                }
            })
            .collect();
        Ok(Mlp { layers, hidden })
    }

    pub fn shape(&self) -> Shape {
        let mut widths = vec![self.layers[0].inputs];
        widths.extend(self.layers.iter().map(|l| l.outputs));
        Shape { widths, activation: self.hidden }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat parameters: per layer, weights then biases.
    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::Contract(format!("expected {} parameters, got {}", self.n_params(), flat.len())));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    pub fn trace(&self, x: &[T]) -> Result<Trace<T>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Contract(format!("network expects {} inputs, got {}", self.n_inputs(), x.len())));
        }
        let mut values = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let input = &values[k];
            let act = if k == last { Activation::Identity } else { self.hidden };
            let y = (0..l.outputs)
                .map(|o| {
                    let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    let z = row.iter().zip(input).fold(l.bias[o], |acc, (w, v)| acc + *w * *v);
                    act.apply(z)
                })
                .collect();
            values.push(y);
        }
        Ok(Trace { values })
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        Ok(self.trace(x)?.values.pop().expect("non-empty trace"))
    }

    /// Adds d(loss)/d(params) to `grad` given d(loss)/d(output).
    pub fn backward(&self, trace: &Trace<T>, d_out: &[T], grad: &mut [T]) {
        debug_assert_eq!(grad.len(), self.n_params());
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |at, l| {
                let start = *at;
                *at += l.weights.len() + l.bias.len();
                Some(start)
            })
            .collect();
        let last = self.layers.len() - 1;
        let mut delta = d_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            if k != last {
                for (d, y) in delta.iter_mut().zip(&trace.values[k + 1]) {
                    *d *= self.hidden.slope(*y);
                }
            }
            let input = &trace.values[k];
            let base = offsets[k];
            for o in 0..l.outputs {
                for i in 0..l.inputs {
                    grad[base + o * l.inputs + i] += delta[o] * input[i];
                }
                grad[base + l.weights.len() + o] += delta[o];
            }
            if k > 0 {
                let mut prev = vec![T::zero(); l.inputs];
                for o in 0..l.outputs {
                    for (i, p) in prev.iter_mut().enumerate() {
                        *p += l.weights[o * l.inputs + i] * delta[o];
                    }
                }
                delta = prev;
            }
        }
    }

    /// Writes `<stem>.params` (one value per line) and `<stem>.shape.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let text: String = self.params().iter().map(|p| format!("{:?}\n", p.to_f64_lossy())).collect();
        std::fs::write(stem.with_extension("params"), text)?;
        std::fs::write(stem.with_extension("shape.json"), serde_json::to_string_pretty(&self.shape())?)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let shape: Shape = serde_json::from_str(&std::fs::read_to_string(stem.with_extension("shape.json"))?)?;
        let text = std::fs::read_to_string(stem.with_extension("params"))?;
        let flat = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| l.trim().parse::<f64>().map(T::lit).map_err(|e| Error::Load { row: n + 1, reason: e.to_string() }))
            .collect::<Result<Vec<T>>>()?;
        Self::from_shape(&shape, &flat)
    }

    pub fn from_shape(shape: &Shape, flat: &[T]) -> Result<Self> {
        if shape.widths.len() < 2 || shape.widths.contains(&0) {
            return Err(Error::Contract(format!("invalid layer widths {:?}", shape.widths)));
        }
        let layers = shape
            .widths
            .windows(2)
            .map(|w| Dense { inputs: w[0], outputs: w[1], weights: vec![T::zero(); w[0] * w[1]], bias: vec![T::zero(); w[1]] })
            .collect();
        let mut net = Mlp { layers, hidden: shape.activation };
        net.set_params(flat)?;
        Ok(net)
    }
}
