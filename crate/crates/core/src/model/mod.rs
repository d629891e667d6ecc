//! Embedding networks, classification heads, losses and training.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::distortion::PrototypeSet;
use crate::geometry::DistanceSpec;
use crate::linalg::{softmax, sq_dist};
use crate::{Error, Result};

mod gradcheck;
mod loss;
mod optim;
mod train;

pub use gradcheck::finite_difference_check;
pub use loss::{
    data_loss, logit_loss, posterior, soft_label_targets, total_loss, Batch, DataLoss, Gradients, LogitLoss,
    LossBreakdown,
};
pub use optim::{Optimizer, OptimizerSpec};
pub use train::{train, EpochRecord, HeadKind, Schedule, TrainConfig, TrainHistory, TrainOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => libm::tanh(x),
        }
    }

    /// Derivative given the pre-activation and the activation output.
    #[inline]
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Shape of the embedding network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Architecture {
    Identity,
    Linear,
    /// Dense layers with `activation` after every hidden layer and a linear
    /// output layer.
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture::Mlp {
            hidden: vec![32, 32],
            activation: Activation::Relu,
        }
    }
}

/// A map from raw features to the embedding space.
///
/// Parameters are stored flat, layer by layer: the `out x in` weight matrix
/// (row-major) followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    architecture: Architecture,
    input_dim: usize,
    output_dim: usize,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Input of each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

impl EmbeddingModel {
    fn layer_dims(architecture: &Architecture, input_dim: usize, output_dim: usize) -> Vec<(usize, usize)> {
        match architecture {
            Architecture::Identity => Vec::new(),
            Architecture::Linear => vec![(input_dim, output_dim)],
            Architecture::Mlp { hidden, .. } => {
                let mut dims = Vec::with_capacity(hidden.len() + 1);
                let mut prev = input_dim;
                for &h in hidden {
                    dims.push((prev, h));
                    prev = h;
                }
                dims.push((prev, output_dim));
                dims
            }
        }
    }

    fn param_count(architecture: &Architecture, input_dim: usize, output_dim: usize) -> usize {
        Self::layer_dims(architecture, input_dim, output_dim)
            .iter()
            .map(|(i, o)| i * o + o)
            .sum()
    }

    fn check_shape(architecture: &Architecture, input_dim: usize, output_dim: usize) -> Result<()> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidConfig("model dimensions must be positive".into()));
        }
        match architecture {
            Architecture::Identity if input_dim != output_dim => Err(Error::DimensionMismatch {
                expected: input_dim,
                found: output_dim,
            }),
            Architecture::Mlp { hidden, .. } if hidden.contains(&0) => {
                Err(Error::InvalidConfig("hidden layer sizes must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    /// Validates and wraps an explicit parameter vector.
    pub fn from_params(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        params: Vec<f64>,
    ) -> Result<Self> {
        Self::check_shape(&architecture, input_dim, output_dim)?;
        let expected = Self::param_count(&architecture, input_dim, output_dim);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            architecture,
            input_dim,
            output_dim,
            params,
        })
    }

    /// All parameters zero.
    pub fn zeros(architecture: Architecture, input_dim: usize, output_dim: usize) -> Result<Self> {
        let n = Self::param_count(&architecture, input_dim, output_dim);
        Self::from_params(architecture, input_dim, output_dim, vec![0.0; n])
    }

    /// Gaussian weights scaled by fan-in (He for ReLU layers, LeCun otherwise),
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(
        architecture: Architecture,
        input_dim: usize,
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut model = Self::zeros(architecture, input_dim, output_dim)?;
        let dims = Self::layer_dims(&model.architecture, input_dim, output_dim);
        let n_layers = dims.len();
        let mut offset = 0;
        for (i, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let gain = match &model.architecture {
                Architecture::Mlp {
                    activation: Activation::Relu,
                    ..
                } if i + 1 < n_layers => 2.0,
                _ => 1.0,
            };
            let normal = Normal::new(0.0, libm::sqrt(gain / fan_in as f64)).expect("positive std");
            for w in &mut model.params[offset..offset + fan_in * fan_out] {
                *w = normal.sample(rng);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn activation(&self) -> Option<Activation> {
        match &self.architecture {
            Architecture::Mlp { activation, .. } => Some(*activation),
            _ => None,
        }
    }

    /// Embeds one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.output)
    }

    pub(crate) fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.len(),
            });
        }
        let dims = Self::layer_dims(&self.architecture, self.input_dim, self.output_dim);
        let n_layers = dims.len();
        let mut trace = Trace {
            inputs: Vec::with_capacity(n_layers),
            pre: Vec::with_capacity(n_layers),
            output: Vec::new(),
        };
        let mut h = x.to_vec();
        let mut offset = 0;
        for (i, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let pre: Vec<f64> = (0..fan_out)
                .map(|o| {
                    b[o] + w[o * fan_in..(o + 1) * fan_in]
                        .iter()
                        .zip(&h)
                        .map(|(a, x)| a * x)
                        .sum::<f64>()
                })
                .collect();
            let out = match self.activation() {
                Some(act) if i + 1 < n_layers => pre.iter().map(|&p| act.apply(p)).collect(),
                _ => pre.clone(),
            };
            trace.inputs.push(core::mem::replace(&mut h, out));
            trace.pre.push(pre);
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding output"));
        }
        trace.output = h;
        Ok(trace)
    }

    /// Accumulates `d_out^T J` into `grads` (same layout as the parameters).
    pub(crate) fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut [f64]) {
        let dims = Self::layer_dims(&self.architecture, self.input_dim, self.output_dim);
        let n_layers = dims.len();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for &(fan_in, fan_out) in &dims {
            offsets.push(offset);
            offset += fan_in * fan_out + fan_out;
        }
        let mut delta = d_out.to_vec();
        for i in (0..n_layers).rev() {
            let (fan_in, fan_out) = dims[i];
            if let (Some(act), true) = (self.activation(), i + 1 < n_layers) {
                // `delta` holds dL/d(output of layer i); turn it into dL/d(pre).
                let next_in = &trace.inputs[i + 1];
                for o in 0..fan_out {
                    delta[o] *= act.derivative(trace.pre[i][o], next_in[o]);
                }
            }
            let off = offsets[i];
            let input = &trace.inputs[i];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grads[off + o * fan_in..off + (o + 1) * fan_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grads[off + fan_in * fan_out + o] += d;
            }
            if i > 0 {
                let w = &self.params[off..off + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, wv) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                        *p += d * wv;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Linear map from embeddings to class logits: `K x m` weights then `K` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitHead {
    n_classes: usize,
    dim: usize,
    params: Vec<f64>,
}

impl LogitHead {
    /// Zero weights, so every class starts with the same logit.
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            n_classes,
            dim,
            params: vec![0.0; n_classes * dim + n_classes],
        }
    }

    pub fn from_params(n_classes: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != n_classes * dim + n_classes {
            return Err(Error::DimensionMismatch {
                expected: n_classes * dim + n_classes,
                found: params.len(),
            });
        }
        Ok(Self { n_classes, dim, params })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn logits(&self, e: &[f64]) -> Result<Vec<f64>> {
        if e.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: e.len(),
            });
        }
        let (w, b) = self.params.split_at(self.n_classes * self.dim);
        Ok((0..self.n_classes)
            .map(|k| {
                b[k] + w[k * self.dim..(k + 1) * self.dim]
                    .iter()
                    .zip(e)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
            })
            .collect())
    }
}

/// The classification module on top of the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Head {
    Prototypes(PrototypeSet),
    Logits(LogitHead),
}

impl Head {
    pub fn params(&self) -> &[f64] {
        match self {
            Head::Prototypes(p) => p.coords().as_slice(),
            Head::Logits(h) => h.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Head::Prototypes(p) => p.coords_mut().as_mut_slice(),
            Head::Logits(h) => h.params_mut(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Head::Prototypes(p) => p.n_leaves(),
            Head::Logits(h) => h.n_classes(),
        }
    }

    pub fn prototypes(&self) -> Option<&PrototypeSet> {
        match self {
            Head::Prototypes(p) => Some(p),
            Head::Logits(_) => None,
        }
    }
}

/// Embedding model plus head: a complete leaf-class classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub model: EmbeddingModel,
    pub head: Head,
    pub distance: DistanceSpec,
}

impl Classifier {
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.forward(x)
    }

    /// Leaf-class posterior of an embedding.
    pub fn posterior_of_embedding(&self, e: &[f64]) -> Result<Vec<f64>> {
        match &self.head {
            Head::Prototypes(pi) => posterior(e, pi, &self.distance),
            Head::Logits(h) => Ok(softmax(&h.logits(e)?)),
        }
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.posterior_of_embedding(&self.embed(x)?)
    }

    /// Most probable leaf class (nearest prototype for prototype heads).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let e = self.embed(x)?;
        match &self.head {
            Head::Prototypes(pi) => {
                let mut best = (f64::INFINITY, 0);
                for k in 0..pi.n_leaves() {
                    let d2 = sq_dist(&e, pi.leaf(k));
                    if d2 < best.0 {
                        best = (d2, k);
                    }
                }
                Ok(best.1)
            }
            Head::Logits(h) => Ok(crate::linalg::argmax(&h.logits(&e)?).unwrap_or(0)),
        }
    }
}
