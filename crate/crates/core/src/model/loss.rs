use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingModel, Head, LogitHead, TrainConfig};
use crate::data::Dataset;
use crate::distortion::{regularizer_value, sample_triplets, PrototypeSet, Regularizer};
use crate::geometry::DistanceSpec;
use crate::linalg::{log_sum_exp, pairwise_sum, softmax, sq_dist, Matrix};
use crate::taxonomy::FiniteMetric;
use crate::{Error, Result};

/// Inputs and leaf labels of one minibatch.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    inputs: Vec<&'a [f64]>,
    labels: Vec<usize>,
}

impl<'a> Batch<'a> {
    pub fn new(inputs: Vec<&'a [f64]>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: inputs.len(),
                right: labels.len(),
            });
        }
        if inputs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(Self { inputs, labels })
    }

    pub fn from_dataset(data: &'a Dataset, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| data.features().row(i)).collect(),
            indices.iter().map(|&i| data.labels()[i]).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[&'a [f64]] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Posterior over leaf classes: softmin of the distances to the leaf prototypes.
pub fn posterior(e: &[f64], pi: &PrototypeSet, spec: &DistanceSpec) -> Result<Vec<f64>> {
    if e.len() != pi.dim() {
        return Err(Error::DimensionMismatch {
            expected: pi.dim(),
            found: e.len(),
        });
    }
    let neg: Vec<f64> = (0..pi.n_leaves())
        .map(|k| -spec.from_sq_norm(sq_dist(e, pi.leaf(k))))
        .collect();
    Ok(softmax(&neg))
}

/// Soft targets `t_l ~ exp(-beta D[l, z])` over the rows of `metric`.
pub fn soft_label_targets(metric: &FiniteMetric, z: usize, beta: f64) -> Vec<f64> {
    let logits: Vec<f64> = (0..metric.len()).map(|l| -beta * metric.cost(l, z)).collect();
    softmax(&logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataLoss {
    pub value: f64,
    pub model_grads: Vec<f64>,
    /// Same shape as the prototype coordinates; rows of hidden prototypes are zero.
    pub proto_grads: Matrix,
}

/// Mean negative log-posterior of the true leaf classes.
pub fn data_loss(
    batch: &Batch<'_>,
    model: &EmbeddingModel,
    pi: &PrototypeSet,
    spec: &DistanceSpec,
) -> Result<DataLoss> {
    if model.output_dim() != pi.dim() {
        return Err(Error::DimensionMismatch {
            expected: pi.dim(),
            found: model.output_dim(),
        });
    }
    let n_leaves = pi.n_leaves();
    let m = pi.dim();
    let scale = 1.0 / batch.len() as f64;
    let mut model_grads = vec![0.0; model.n_params()];
    let mut proto_grads = Matrix::zeros(pi.len(), m);
    let mut terms = Vec::with_capacity(batch.len());
    let mut dist = vec![0.0; n_leaves];
    let mut slope = vec![0.0; n_leaves];
    for (x, &z) in batch.inputs.iter().zip(&batch.labels) {
        if z >= n_leaves {
            return Err(Error::UnknownClass(alloc::format!("label {z}")));
        }
        let trace = model.forward_trace(x)?;
        let e = &trace.output;
        for k in 0..n_leaves {
            let (d, c) = spec.value_and_slope_or_zero(sq_dist(e, pi.leaf(k)));
            dist[k] = d;
            slope[k] = c;
        }
        let neg: Vec<f64> = dist.iter().map(|d| -d).collect();
        terms.push(dist[z] + log_sum_exp(&neg));
        let p = softmax(&neg);
        // dL/dd_k = [k = z] - p_k
        let mut d_e = vec![0.0; m];
        for k in 0..n_leaves {
            let w = ((k == z) as u8 as f64 - p[k]) * slope[k] * scale;
            if w == 0.0 {
                continue;
            }
            let row = pi.leaf_rows()[k];
            let proto = pi.leaf(k);
            for j in 0..m {
                let g = w * (e[j] - proto[j]);
                d_e[j] += g;
                proto_grads.as_mut_slice()[row * m + j] -= g;
            }
        }
        model.backward(&trace, &d_e, &mut model_grads);
    }
    let value = pairwise_sum(&terms) * scale;
    Ok(DataLoss {
        value,
        model_grads,
        proto_grads,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitLoss {
    pub value: f64,
    pub model_grads: Vec<f64>,
    pub head_grads: Vec<f64>,
}

/// Cross-entropy of a linear head against per-sample target distributions
/// produced by `targets(label)`.
pub fn logit_loss(
    batch: &Batch<'_>,
    model: &EmbeddingModel,
    head: &LogitHead,
    targets: impl Fn(usize) -> Vec<f64>,
) -> Result<LogitLoss> {
    let k = head.n_classes();
    let m = head.dim();
    if model.output_dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: model.output_dim(),
        });
    }
    let scale = 1.0 / batch.len() as f64;
    let mut model_grads = vec![0.0; model.n_params()];
    let mut head_grads = vec![0.0; head.params().len()];
    let mut terms = Vec::with_capacity(batch.len());
    let (w, _) = head.params().split_at(k * m);
    for (x, &z) in batch.inputs.iter().zip(&batch.labels) {
        if z >= k {
            return Err(Error::UnknownClass(alloc::format!("label {z}")));
        }
        let trace = model.forward_trace(x)?;
        let e = &trace.output;
        let logits = head.logits(e)?;
        let t = targets(z);
        let lse = log_sum_exp(&logits);
        terms.push(t.iter().zip(&logits).map(|(t, s)| t * (lse - s)).sum::<f64>());
        let p = softmax(&logits);
        let mut d_e = vec![0.0; m];
        for c in 0..k {
            let g = (p[c] - t[c]) * scale;
            if g == 0.0 {
                continue;
            }
            for j in 0..m {
                head_grads[c * m + j] += g * e[j];
                d_e[j] += g * w[c * m + j];
            }
            head_grads[k * m + c] += g;
        }
        model.backward(&trace, &d_e, &mut model_grads);
    }
    Ok(LogitLoss {
        value: pairwise_sum(&terms) * scale,
        model_grads,
        head_grads,
    })
}

/// Loss values of one evaluation of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_data: f64,
    pub l_reg: f64,
    pub total: f64,
    pub s_star: Option<f64>,
}

/// Gradients of the training objective, split like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub model: Vec<f64>,
    pub head: Vec<f64>,
}

/// `L_data + lambda * L_reg` and its gradients.
///
/// `metric` covers every prototype row (leaves, plus internal nodes for
/// hidden prototypes). With `lambda = 0` the regularizer is skipped entirely,
/// so the run is identical to one without regularizer.
pub fn total_loss<R: Rng + ?Sized>(
    batch: &Batch<'_>,
    model: &EmbeddingModel,
    head: &Head,
    metric: &FiniteMetric,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(LossBreakdown, Gradients)> {
    match head {
        Head::Prototypes(pi) => {
            let data = data_loss(batch, model, pi, &config.distance)?;
            let mut head_grads = data.proto_grads.into_vec();
            let (l_reg, s_star) = if config.lambda > 0.0 && config.regularizer != Regularizer::None {
                let triplets = match config.regularizer {
                    Regularizer::Rank => Some(sample_triplets(pi.len(), config.triplets, rng)?),
                    _ => None,
                };
                let reg = regularizer_value(config.regularizer, pi, metric, &config.distance, triplets.as_ref())?;
                for (g, r) in head_grads.iter_mut().zip(reg.grads.as_slice()) {
                    *g += config.lambda * r;
                }
                (reg.value, reg.scale)
            } else {
                (0.0, None)
            };
            let breakdown = LossBreakdown {
                l_data: data.value,
                l_reg,
                total: data.value + config.lambda * l_reg,
                s_star,
            };
            Ok((
                breakdown,
                Gradients {
                    model: data.model_grads,
                    head: head_grads,
                },
            ))
        }
        Head::Logits(h) => {
            let leaf_rows = metric.leaf_rows();
            let loss = match config.head {
                super::HeadKind::SoftLabels => {
                    let leaves = metric.restrict(&leaf_rows);
                    logit_loss(batch, model, h, |z| soft_label_targets(&leaves, z, config.beta))?
                }
                _ => logit_loss(batch, model, h, |z| {
                    let mut t = vec![0.0; h.n_classes()];
                    t[z] = 1.0;
                    t
                })?,
            };
            let breakdown = LossBreakdown {
                l_data: loss.value,
                l_reg: 0.0,
                total: loss.value,
                s_star: None,
            };
            Ok((
                breakdown,
                Gradients {
                    model: loss.model_grads,
                    head: loss.head_grads,
                },
            ))
        }
    }
}
