use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss, Batch, LossBreakdown};
use super::{Architecture, Classifier, EmbeddingModel, Head, LogitHead, Optimizer, OptimizerSpec};
use crate::data::Dataset;
use crate::distortion::{fit_prototypes, PrototypeSet, Regularizer};
use crate::geometry::DistanceSpec;
use crate::linalg::pairwise_sum;
use crate::taxonomy::FiniteMetric;
use crate::{Error, Result};

/// Classification module trained on top of the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    #[default]
    Prototypes,
    /// Linear logits with one-hot cross-entropy.
    CrossEntropy,
    /// Linear logits with cross-entropy against cost-softened targets.
    SoftLabels,
}

/// How prototypes and embedding are learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Prototypes and model updated together on every minibatch.
    #[default]
    Joint,
    /// Prototypes fitted to the regularizer first, then frozen.
    FixedProto,
}

/// Stage-one limits of the fixed-prototype schedule.
const FIXED_PROTO_MAX_STEPS: usize = 10_000;
const FIXED_PROTO_REL_TOL: f64 = 1e-8;

/// Everything that defines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Regularization strength.
    pub lambda: f64,
    pub regularizer: Regularizer,
    pub head: HeadKind,
    /// Inverse temperature of the soft-label targets.
    pub beta: f64,
    pub distance: DistanceSpec,
    pub embedding_dim: usize,
    pub architecture: Architecture,
    /// Also learn (regularized) prototypes for internal taxonomy nodes.
    pub hidden_prototypes: bool,
    pub schedule: Schedule,
    pub optimizer: OptimizerSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Triplets sampled per minibatch for the rank regularizer.
    pub triplets: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            regularizer: Regularizer::Disto,
            head: HeadKind::Prototypes,
            beta: 10.0,
            distance: DistanceSpec::default(),
            embedding_dim: 64,
            architecture: Architecture::default(),
            hidden_prototypes: false,
            schedule: Schedule::Joint,
            optimizer: OptimizerSpec::default(),
            epochs: 50,
            batch_size: 32,
            seed: 0,
            triplets: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.embedding_dim == 0 {
            return bad("epochs, batch_size and embedding_dim must be >= 1");
        }
        if self.regularizer == Regularizer::Rank && self.triplets == 0 {
            return bad("the rank regularizer needs triplets >= 1");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        self.distance.validate()?;
        self.optimizer.validate().map_err(|m| Error::InvalidConfig(m.into()))?;
        if self.head != HeadKind::Prototypes {
            if self.regularizer != Regularizer::None && self.lambda > 0.0 {
                return bad("prototype regularizers need the prototypes head; set regularizer to \"none\"");
            }
            if self.hidden_prototypes || self.schedule != Schedule::Joint {
                return bad("hidden prototypes and the fixed-proto schedule need the prototypes head");
            }
        }
        Ok(())
    }
}

/// One completed epoch. Loss values are means over the epoch's minibatches,
/// `train_er`/`train_ac` are measured on the whole training set afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_data: f64,
    pub l_reg: f64,
    pub total: f64,
    /// Scale of the distortion regularizer after the epoch's last minibatch.
    pub s_star: Option<f64>,
    pub train_er: f64,
    pub train_ac: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub history: TrainHistory,
    /// Metric over the prototype rows (leaves, plus internal nodes with hidden prototypes).
    pub metric: FiniteMetric,
}

fn diverged(epoch: usize, lr: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::Diverged { epoch, lr, what },
        other => other,
    }
}

/// Trains embedding model and head on `data`.
///
/// `metric` must list the dataset's classes as its leaf rows, in order; it may
/// also contain internal taxonomy nodes, which are only used when hidden
/// prototypes are enabled.
pub fn train<R: Rng + ?Sized>(
    data: &Dataset,
    metric: &FiniteMetric,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    config.validate()?;
    let leaf_rows = metric.leaf_rows();
    let leaf_metric = metric.restrict(&leaf_rows);
    if leaf_metric.names() != data.class_names() {
        return Err(Error::MismatchedClassSets);
    }
    let proto_metric = if config.hidden_prototypes {
        metric.clone()
    } else {
        leaf_metric.clone()
    };

    let model = EmbeddingModel::init(config.architecture.clone(), data.input_dim(), config.embedding_dim, rng)?;
    let head = match config.head {
        HeadKind::Prototypes => Head::Prototypes(PrototypeSet::random(&proto_metric, config.embedding_dim, rng)?),
        HeadKind::CrossEntropy | HeadKind::SoftLabels => {
            Head::Logits(LogitHead::zeros(data.n_classes(), config.embedding_dim))
        }
    };
    let mut classifier = Classifier {
        model,
        head,
        distance: config.distance,
    };

    let freeze_prototypes = config.schedule == Schedule::FixedProto;
    if freeze_prototypes && config.regularizer != Regularizer::None {
        if let Head::Prototypes(pi) = &mut classifier.head {
            fit_prototypes(
                pi,
                &proto_metric,
                &config.distance,
                config.regularizer,
                FIXED_PROTO_MAX_STEPS,
                FIXED_PROTO_REL_TOL,
                rng,
            )?;
        }
    }

    let lr = config.optimizer.lr();
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        order.shuffle(rng);
        let mut l_data = Vec::new();
        let mut l_reg = Vec::new();
        let mut s_star = None;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::from_dataset(data, chunk)?;
            let (b, g): (LossBreakdown, _) =
                total_loss(&batch, &classifier.model, &classifier.head, &proto_metric, config, rng)
                    .map_err(diverged(epoch, lr))?;
            if !b.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    lr,
                    what: "loss",
                });
            }
            if g.model.iter().chain(&g.head).any(|x| !x.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    lr,
                    what: "gradient",
                });
            }
            if freeze_prototypes {
                optimizer.step(&mut [classifier.model.params_mut()], &[&g.model]);
            } else {
                optimizer.step(
                    &mut [classifier.model.params_mut(), classifier.head.params_mut()],
                    &[&g.model, &g.head],
                );
            }
            l_data.push(b.l_data);
            l_reg.push(b.l_reg);
            s_star = b.s_star;
        }
        let n_batches = l_data.len() as f64;
        let (ld, lr_mean) = (pairwise_sum(&l_data) / n_batches, pairwise_sum(&l_reg) / n_batches);
        let (train_er, train_ac) = error_and_cost(&classifier, data, &leaf_metric).map_err(diverged(epoch, lr))?;
        history.records.push(EpochRecord {
            epoch,
            l_data: ld,
            l_reg: lr_mean,
            total: ld + config.lambda * lr_mean,
            s_star,
            train_er,
            train_ac,
        });
    }
    Ok(TrainOutcome {
        classifier,
        history,
        metric: proto_metric,
    })
}

/// Max-probability error rate and average cost over a dataset.
pub(crate) fn error_and_cost(
    classifier: &Classifier,
    data: &Dataset,
    leaf_metric: &FiniteMetric,
) -> Result<(f64, f64)> {
    let mut errors = 0usize;
    let mut costs = Vec::with_capacity(data.len());
    for (i, &z) in data.labels().iter().enumerate() {
        let y = classifier.predict(data.features().row(i))?;
        if y != z {
            errors += 1;
        }
        costs.push(leaf_metric.cost(y, z));
    }
    let n = data.len() as f64;
    Ok((errors as f64 / n, pairwise_sum(&costs) / n))
}
