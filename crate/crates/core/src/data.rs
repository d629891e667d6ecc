//! Labelled feature datasets and hierarchy-aligned synthetic data.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::taxonomy::Taxonomy;
use crate::{Error, Result};

/// Feature rows with leaf-class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    /// Index into `class_names` for every row.
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.rows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.rows(),
                right: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&z| z >= class_names.len()) {
            return Err(Error::UnknownClass(format!("label index {bad}")));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("features"));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &z in &self.labels {
            counts[z] += 1;
        }
        counts
    }
}

/// Parameters of [`gen_hierarchical_gaussians`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub per_class: usize,
    pub dims: usize,
    /// Offset length between the root and its children.
    pub root_spread: f64,
    /// Offset shrink factor per level, in `[0, 1)`.
    pub decay: f64,
    /// Standard deviation of the per-sample Gaussian noise.
    pub noise: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            per_class: 100,
            dims: 8,
            root_spread: 4.0,
            decay: 0.5,
            noise: 1.0,
        }
    }
}

/// Gaussian blobs whose means follow the taxonomy.
///
/// The root sits at the origin; each child is offset from its parent by a
/// uniformly random direction of length `root_spread * decay^(parent depth)`.
/// Every leaf then gets `per_class` samples around its mean with isotropic
/// noise of standard deviation `noise`. Classes are the taxonomy leaves in
/// document order; rows are grouped by class.
pub fn gen_hierarchical_gaussians<R: Rng + ?Sized>(
    tax: &Taxonomy,
    params: &SynthParams,
    rng: &mut R,
) -> Result<Dataset> {
    let SynthParams {
        per_class,
        dims,
        root_spread,
        decay,
        noise,
    } = *params;
    if per_class == 0 {
        return Err(Error::InvalidConfig("per_class must be >= 1".into()));
    }
    if dims < 2 {
        return Err(Error::InvalidConfig("dims must be >= 2".into()));
    }
    if !(0.0..=1.0).contains(&decay) || !(root_spread >= 0.0) || !(noise >= 0.0) {
        return Err(Error::InvalidConfig(
            "need decay in [0, 1], root_spread >= 0 and noise >= 0".into(),
        ));
    }
    let leaves = tax.leaves();
    if leaves.is_empty() {
        return Err(Error::TooFewLeaves { needed: 1, found: 0 });
    }

    let mut means = vec![vec![0.0; dims]; tax.len()];
    let mut stack = vec![tax.root()];
    while let Some(u) = stack.pop() {
        let length = root_spread * libm::pow(decay, tax.depth(u) as f64);
        for &c in tax.children(u) {
            let dir = random_unit(dims, rng);
            means[c] = means[u].iter().zip(&dir).map(|(m, d)| m + length * d).collect();
        }
        // reversed so children are visited in document order
        stack.extend(tax.children(u).iter().rev());
    }

    let mut data = Vec::with_capacity(leaves.len() * per_class * dims);
    let mut labels = Vec::with_capacity(leaves.len() * per_class);
    for (class, &leaf) in leaves.iter().enumerate() {
        for _ in 0..per_class {
            for j in 0..dims {
                let z: f64 = StandardNormal.sample(rng);
                data.push(means[leaf][j] + noise * z);
            }
            labels.push(class);
        }
    }
    let names = leaves.iter().map(|&l| tax.name(l).to_string()).collect();
    Dataset::new(Matrix::from_vec(labels.len(), dims, data)?, labels, names)
}

fn random_unit<R: Rng + ?Sized>(dims: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dims).map(|_| StandardNormal.sample(rng)).collect();
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Result of [`split`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub train: Dataset,
    pub test: Dataset,
    /// Indices (into the original dataset) of the train and test rows.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Classes that could not be stratified.
    pub warnings: Vec<String>,
}

/// Stratified train/test split.
///
/// Each class contributes `round(fraction * count)` test rows, clamped so both
/// sides get at least one. Classes with a single sample go to the training
/// side with a warning. Rows keep their original relative order.
pub fn split<R: Rng + ?Sized>(data: &Dataset, test_fraction: f64, rng: &mut R) -> Result<SplitOutcome> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut by_class = vec![Vec::new(); data.n_classes()];
    for (i, &z) in data.labels().iter().enumerate() {
        by_class[z].push(i);
    }
    let mut is_test = vec![false; data.len()];
    let mut warnings = Vec::new();
    for (class, rows) in by_class.iter_mut().enumerate() {
        if rows.is_empty() {
            continue;
        }
        if rows.len() < 2 {
            warnings.push(format!(
                "class `{}` has {} sample(s) and cannot be stratified; kept in the training split",
                data.class_names()[class],
                rows.len()
            ));
            continue;
        }
        rows.shuffle(rng);
        let n_test = (libm::round(test_fraction * rows.len() as f64) as usize).clamp(1, rows.len() - 1);
        for &i in &rows[..n_test] {
            is_test[i] = true;
        }
    }
    let (test_indices, train_indices): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| is_test[i]);
    if train_indices.is_empty() || test_indices.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(SplitOutcome {
        train: data.subset(&train_indices),
        test: data.subset(&test_indices),
        train_indices,
        test_indices,
        warnings,
    })
}
