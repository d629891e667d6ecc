//! Error rate, average cost, confusion matrices and system comparison.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distortion::{distortion_report, DistortionReport, PrototypeSet};
use crate::geometry::DistanceSpec;
use crate::linalg::{pairwise_sum, Matrix};
use crate::taxonomy::FiniteMetric;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// Error rate.
    pub er: f64,
    /// Average cost of the predictions.
    pub ac: f64,
    /// Error rate with internal-node predictions counted as errors.
    pub l_er: Option<f64>,
    /// Error rate over the samples predicted as a leaf.
    pub r_er: Option<f64>,
    /// Fraction of samples predicted as an internal node.
    pub internal_fraction: Option<f64>,
    /// Leaf class names (confusion rows).
    pub class_names: Vec<String>,
    /// Predicted node names (confusion columns).
    pub predicted_names: Vec<String>,
    /// Column of each leaf class in `confusion`.
    pub leaf_columns: Vec<usize>,
    /// Counts indexed `[true class][predicted node]`.
    pub confusion: Vec<Vec<u64>>,
    /// Costs between leaf classes.
    pub leaf_costs: Matrix,
    pub distortion: Option<DistortionReport>,
}

/// Scores predictions against leaf labels.
///
/// `predictions` are rows of `metric` (which may include internal nodes);
/// `labels` are leaf class indices, i.e. positions in `metric.leaf_rows()`.
/// When `prototypes` is given, the distortion report of its leaf prototypes
/// against the leaf costs is attached.
pub fn evaluate(
    predictions: &[usize],
    labels: &[usize],
    metric: &FiniteMetric,
    prototypes: Option<(&PrototypeSet, &DistanceSpec)>,
) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let leaf_rows = metric.leaf_rows();
    let k = leaf_rows.len();
    let mut confusion = vec![vec![0u64; metric.len()]; k];
    let mut costs = Vec::with_capacity(labels.len());
    let (mut errors, mut internal, mut leaf_errors) = (0usize, 0usize, 0usize);
    for (&y, &z) in predictions.iter().zip(labels) {
        if y >= metric.len() {
            return Err(Error::UnknownClass(format!("prediction row {y}")));
        }
        if z >= k {
            return Err(Error::UnknownClass(format!("label {z}")));
        }
        let truth = leaf_rows[z];
        confusion[z][y] += 1;
        costs.push(metric.cost(y, truth));
        if y != truth {
            errors += 1;
            if metric.is_leaf(y) {
                leaf_errors += 1;
            }
        }
        if !metric.is_leaf(y) {
            internal += 1;
        }
    }
    let n = labels.len();
    let er = errors as f64 / n as f64;
    let has_internal = k < metric.len();
    let leaf_predicted = n - internal;
    let leaf_metric = metric.restrict(&leaf_rows);
    let distortion = match prototypes {
        Some((pi, spec)) => {
            if pi.n_leaves() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: pi.n_leaves(),
                });
            }
            let leaf_pi = PrototypeSet::for_metric(&leaf_metric, pi.leaf_coords())?;
            Some(distortion_report(&leaf_pi, &leaf_metric, spec)?)
        }
        None => None,
    };
    Ok(EvalReport {
        n,
        er,
        ac: pairwise_sum(&costs) / n as f64,
        l_er: has_internal.then_some(er),
        r_er: (has_internal && leaf_predicted > 0).then(|| leaf_errors as f64 / leaf_predicted as f64),
        internal_fraction: has_internal.then(|| internal as f64 / n as f64),
        class_names: leaf_metric.names().to_vec(),
        predicted_names: metric.names().to_vec(),
        leaf_columns: leaf_rows,
        confusion,
        leaf_costs: leaf_metric.costs().clone(),
        distortion,
    })
}

impl EvalReport {
    /// Confusions between two leaf classes, in both directions.
    pub fn pair_confusions(&self, k: usize, l: usize) -> u64 {
        self.confusion[k][self.leaf_columns[l]] + self.confusion[l][self.leaf_columns[k]]
    }

    /// Average cost recomputed from the confusion matrix.
    pub fn ac_from_confusion(&self, metric: &FiniteMetric) -> f64 {
        let mut total = 0.0;
        for (z, row) in self.confusion.iter().enumerate() {
            for (y, &count) in row.iter().enumerate() {
                total += count as f64 * metric.cost(y, self.leaf_columns[z]);
            }
        }
        total / self.n as f64
    }
}

/// Change in confusion between two systems for one unordered class pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionDelta {
    pub k: usize,
    pub l: usize,
    /// Cost between the two classes.
    pub cost: f64,
    pub count_a: u64,
    pub count_b: u64,
    /// `(count_b - count_a) / count_a`; absent when `count_a` is 0 and `count_b` is not.
    pub relative_change: Option<f64>,
}

/// Per-pair confusion changes from `a` to `b`, most improved first.
///
/// Pairs without a relative change (new confusions) come last; ties are
/// ordered by absolute change, then by pair.
pub fn compare(a: &EvalReport, b: &EvalReport) -> Result<Vec<ConfusionDelta>> {
    if a.class_names != b.class_names {
        return Err(Error::MismatchedClassSets);
    }
    let k = a.class_names.len();
    let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            let (ca, cb) = (a.pair_confusions(i, j), b.pair_confusions(i, j));
            let relative_change = match (ca, cb) {
                (0, 0) => Some(0.0),
                (0, _) => None,
                _ => Some((cb as f64 - ca as f64) / ca as f64),
            };
            out.push(ConfusionDelta {
                k: i,
                l: j,
                cost: a.leaf_costs.get(i, j),
                count_a: ca,
                count_b: cb,
                relative_change,
            });
        }
    }
    out.sort_by(|x, y| {
        let rx = x.relative_change.unwrap_or(f64::INFINITY);
        let ry = y.relative_change.unwrap_or(f64::INFINITY);
        rx.total_cmp(&ry)
            .then((x.count_b as i64 - x.count_a as i64).cmp(&(y.count_b as i64 - y.count_a as i64)))
            .then((x.k, x.l).cmp(&(y.k, y.l)))
    });
    Ok(out)
}

/// Mean embedding of every class; stands in for prototypes of logit heads.
pub fn class_means(embeddings: &Matrix, labels: &[usize], n_classes: usize) -> Result<Matrix> {
    if embeddings.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: embeddings.rows(),
            right: labels.len(),
        });
    }
    let mut sums = Matrix::zeros(n_classes, embeddings.cols());
    let mut counts = vec![0usize; n_classes];
    for (i, &z) in labels.iter().enumerate() {
        if z >= n_classes {
            return Err(Error::UnknownClass(format!("label {z}")));
        }
        counts[z] += 1;
        for (s, x) in sums.row_mut(z).iter_mut().zip(embeddings.row(i)) {
            *s += x;
        }
    }
    for (z, &c) in counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::InvalidConfig(format!("class {z} has no samples")));
        }
        for s in sums.row_mut(z) {
            *s /= c as f64;
        }
    }
    Ok(sums)
}
