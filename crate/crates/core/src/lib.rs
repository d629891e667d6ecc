//! Metric-guided prototype learning.
//!
//! Class taxonomies are turned into misclassification-cost metrics, learnable
//! class prototypes are arranged so that their pairwise distances follow those
//! costs (up to a free global scale), and an embedding model is trained jointly
//! with the prototypes. Inference can minimize the expected cost instead of
//! picking the most probable class, and may back off to internal taxonomy nodes.
//!
//! The crate is `no_std` and only needs an allocator. File IO, checkpoints and
//! the command-line runner live in the `guided-proto-cli` crate.

#![no_std]
#![warn(missing_debug_implementations)]
// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix formulas
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod error;
pub mod linalg;

pub mod data;
pub mod distortion;
pub mod evaluation;
pub mod geometry;
pub mod inference;
pub mod model;
pub mod taxonomy;

pub use error::{Error, Result};

pub use data::{gen_hierarchical_gaussians, split, Dataset, SplitOutcome, SynthParams};
pub use distortion::{
    disto_loss, distortion, distortion_report, optimal_scale_l1, rank_loss, sample_triplets, scale_free_distortion,
    DistoLoss, DistortionReport, PrototypeSet, Regularizer, ScaleMode, TripletBatch,
};
pub use evaluation::{compare, evaluate, ConfusionDelta, EvalReport};
pub use geometry::{distance, distance_gradient, DistanceKind, DistanceSpec};
pub use inference::{
    build_index, decide, expected_costs, predict_any_node, predict_max_prob, predict_min_expected_cost, CostTable,
    Prediction, PrototypeIndex, Scheme,
};
pub use linalg::Matrix;
pub use model::{
    train, Architecture, Classifier, EmbeddingModel, HeadKind, LossBreakdown, OptimizerSpec, Schedule, TrainConfig,
    TrainHistory,
};
pub use taxonomy::{cost_matrix, parse_taxonomy, validate_metric, FiniteMetric, NodeSet, Taxonomy, TaxonomyFormat};
