use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Elu,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
            Activation::Elu => 2,
            Activation::Relu => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Linear,
            1 => Activation::Tanh,
            2 => Activation::Elu,
            3 => Activation::Relu,
            _ => return Err(Error::Format(format!("unknown activation tag {tag}"))),
        })
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Tanh => z.tanh(),
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => 1.0 - a * a,
            Activation::Elu => {
                if a > 0.0 {
                    1.0
                } else {
                    a + 1.0
                }
            }
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected layer computing `act(W x + b)`; `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense { weights: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs), activation }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Applies the layer to a batch stored column-wise.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.bias;
        }
        let act = self.activation;
        z.apply(|v| *v = act.apply(*v));
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients with the same shapes as the layers of an [`Mlp`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` has one more entry than `activations`.
    pub fn new(sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if sizes.len() != activations.len() + 1 || activations.is_empty() {
            return Err(Error::Dimension(format!(
                "{} layer sizes for {} activations",
                sizes.len(),
                activations.len()
            )));
        }
        let mut rng = seeds::rng(seed);
        let layers = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut layer = Dense::zeros(w[0], w[1], act);
                layer.weights.apply(|v| *v = rng.random_range(-limit..=limit));
                layer
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut a = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            a = layer.forward(&a);
        }
        a
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&DMatrix::from_column_slice(x.len(), 1, x)).as_slice().to_vec()
    }

    /// Mean over the batch of the squared error `||y - t||^2`, and its gradient.
    pub fn loss_and_gradients(&self, x: &DMatrix<f64>, target: &DMatrix<f64>) -> (f64, Gradients) {
        let batch = x.ncols() as f64;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        let out = acts.last().unwrap();
        let diff = out - target;
        let loss = diff.norm_squared() / batch;

        let n = self.layers.len();
        let mut gw = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        let mut delta = diff * (2.0 / batch);
        for idx in (0..n).rev() {
            let layer = &self.layers[idx];
            let act = layer.activation;
            delta.zip_apply(&acts[idx + 1], |d, a| *d *= act.derivative(a));
            gw.push(&delta * acts[idx].transpose());
            gb.push(delta.column_sum());
            if idx > 0 {
                delta = layer.weights.tr_mul(&delta);
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, bias: gb })
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(layer.bias.as_slice());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.as_mut_slice().copy_from_slice(&params[pos..pos + nw]);
            pos += nw;
            let nb = layer.bias.len();
            layer.bias.as_mut_slice().copy_from_slice(&params[pos..pos + nb]);
            pos += nb;
        }
        Ok(())
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }
}
