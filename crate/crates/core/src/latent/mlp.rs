use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected layer, `y = x·W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Feedforward network: tanh on hidden layers, linear output.
///
/// The same type doubles as the gradient container for its own parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[k]` feeds layer `k`; the last entry is the network output.
    activations: Vec<Array2<f64>>,
}

impl Trace {
    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("trace is never empty")
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes = [in, hidden.., out]`.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
                    rng.random_range(-limit..limit)
                });
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Dense {
                    weight: Array2::zeros((w[0], w[1])),
                    bias: Array1::zeros(w[1]),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes())
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.bias.len()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.bias.len()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters in a fixed order (layer by layer, weights row-major
    /// then biases).
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: cols,
            });
        }
        Ok(())
    }

    /// Batched forward pass; rows are samples.
    pub fn forward(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut h = input.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias;
            if k < last {
                h.mapv_inplace(f64::tanh);
            }
        }
        Ok(h)
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec())
            .expect("row vector shape");
        Ok(self.forward(&x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_trace(&self, input: &Array2<f64>) -> Result<Trace> {
        self.check_input(input.ncols())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut h = activations[k].dot(&layer.weight) + &layer.bias;
            if k < last {
                h.mapv_inplace(f64::tanh);
            }
            activations.push(h);
        }
        Ok(Trace { activations })
    }

    /// Reverse pass: given `∂L/∂output`, returns `(∂L/∂params, ∂L/∂input)`.
    pub fn backward(&self, trace: &Trace, d_output: &Array2<f64>) -> (Mlp, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_output.clone();
        let last = self.layers.len() - 1;
        for k in (0..self.layers.len()).rev() {
            if k < last {
                // tanh' = 1 - tanh², evaluated on the stored activation
                let a = &trace.activations[k + 1];
                delta.zip_mut_with(a, |d, &t| *d *= 1.0 - t * t);
            }
            let input = &trace.activations[k];
            grads.push(Dense {
                weight: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            delta = delta.dot(&self.layers[k].weight.t());
        }
        grads.reverse();
        (Mlp { layers: grads }, delta)
    }

    /// Loss value and parameter gradient for a loss given as a function of
    /// the network output (returning the value and `∂L/∂output`).
    pub fn gradients<F>(&self, input: &Array2<f64>, loss: F) -> Result<(f64, Mlp)>
    where
        F: FnOnce(&Array2<f64>) -> Result<(f64, Array2<f64>)>,
    {
        let trace = self.forward_trace(input)?;
        if trace.output().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: 0,
                what: "forward pass".into(),
            });
        }
        let (value, d_out) = loss(trace.output())?;
        let (g, _) = self.backward(&trace, &d_out);
        Ok((value, g))
    }
}
