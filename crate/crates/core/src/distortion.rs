//! Distortion between prototype arrangements and cost metrics, and the
//! prototype regularizers built on it.
//!
//! For prototypes `pi` and a cost metric `D`, write `a(k,l) = d(pi_k, pi_l) / D[k,l]`.
//! The distortion is the mean of `|a - 1|` over class pairs. The scale-free
//! distortion minimizes it over a global factor `s` applied to all distances,
//! `f(s) = sum |s a - 1|`, whose minimizer is `1 / a_i` for the weighted
//! median `a_i` of the ratios (weights `a`). The smooth surrogate squares the
//! residuals, and its optimal scale has the closed form
//! `s = sum(a) / sum(a^2)`.
//!
//! All sums run over unordered pairs `k < l`. Both `d` and `D` are symmetric,
//! so this equals the ordered-pair sum with its `1 / (K (K - 1))` normalizer.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geometry::DistanceSpec;
use crate::linalg::{pairwise_sum, sq_dist, Matrix};
use crate::taxonomy::FiniteMetric;
use crate::{Error, Result};

/// Learnable class prototypes, one row per class node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    coords: Matrix,
    /// Taxonomy node id of each row.
    node_ids: Vec<usize>,
    /// Row of each leaf class, in leaf order.
    leaf_rows: Vec<usize>,
    includes_internal: bool,
}

impl PrototypeSet {
    /// Prototypes indexed like the rows of `metric`.
    pub fn for_metric(metric: &FiniteMetric, coords: Matrix) -> Result<Self> {
        if coords.rows() != metric.len() {
            return Err(Error::DimensionMismatch {
                expected: metric.len(),
                found: coords.rows(),
            });
        }
        if coords.rows() < 2 {
            return Err(Error::TooFewClasses {
                needed: 2,
                found: coords.rows(),
            });
        }
        if coords.cols() == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        if !coords.is_finite() {
            return Err(Error::NonFinite("prototype coordinates"));
        }
        let leaf_rows = metric.leaf_rows();
        Ok(Self {
            includes_internal: leaf_rows.len() < metric.len(),
            coords,
            node_ids: metric.node_ids().to_vec(),
            leaf_rows,
        })
    }

    /// I.i.d. standard Gaussian coordinates.
    pub fn random<R: Rng + ?Sized>(metric: &FiniteMetric, dim: usize, rng: &mut R) -> Result<Self> {
        let data = (0..metric.len() * dim).map(|_| StandardNormal.sample(rng)).collect();
        Self::for_metric(metric, Matrix::from_vec(metric.len(), dim, data)?)
    }

    pub fn len(&self) -> usize {
        self.coords.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.cols()
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut Matrix {
        &mut self.coords
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn leaf_rows(&self) -> &[usize] {
        &self.leaf_rows
    }

    pub fn includes_internal(&self) -> bool {
        self.includes_internal
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_rows.len()
    }

    /// Coordinates of leaf class `class`.
    #[inline]
    pub fn leaf(&self, class: usize) -> &[f64] {
        self.coords.row(self.leaf_rows[class])
    }

    /// Leaf prototypes only, in leaf order.
    pub fn leaf_coords(&self) -> Matrix {
        self.coords.select_rows(&self.leaf_rows)
    }

    /// Same classes, coordinates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            coords: self.coords.scaled(factor),
            ..self.clone()
        }
    }

    pub fn with_coords(&self, coords: Matrix) -> Result<Self> {
        if coords.rows() != self.coords.rows() || coords.cols() != self.coords.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.as_slice().len(),
                found: coords.as_slice().len(),
            });
        }
        Ok(Self { coords, ..self.clone() })
    }
}

/// Summary of how well prototypes reproduce a cost metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub distortion: f64,
    pub scale_free_distortion: f64,
    /// Optimal scale of the absolute-residual distortion.
    pub s_star_l1: f64,
    /// Closed-form optimal scale of the squared-residual surrogate.
    pub s_star_l2: f64,
    /// Number of ordered class pairs.
    pub pair_count: usize,
}

/// Pairwise distances and costs over unordered pairs `k < l`.
struct PairTable {
    pairs: Vec<(usize, usize)>,
    dist: Vec<f64>,
    /// Gradient coefficient: `grad_{pi_k} d = slope * (pi_k - pi_l)`.
    slope: Vec<f64>,
    cost: Vec<f64>,
}

impl PairTable {
    fn build(pi: &PrototypeSet, metric: &FiniteMetric, spec: &DistanceSpec) -> Result<Self> {
        let k = pi.len();
        if metric.len() != k {
            return Err(Error::DimensionMismatch {
                expected: metric.len(),
                found: k,
            });
        }
        let n = k * (k - 1) / 2;
        let mut table = Self {
            pairs: Vec::with_capacity(n),
            dist: Vec::with_capacity(n),
            slope: Vec::with_capacity(n),
            cost: Vec::with_capacity(n),
        };
        for a in 0..k {
            for b in a + 1..k {
                let cost = metric.cost(a, b);
                if !(cost > 0.0) {
                    return Err(Error::ZeroCost(a, b));
                }
                let (d, c) = spec.value_and_slope_or_zero(sq_dist(pi.coords.row(a), pi.coords.row(b)));
                if !d.is_finite() {
                    return Err(Error::NonFinite("prototype distances"));
                }
                table.pairs.push((a, b));
                table.dist.push(d);
                table.slope.push(c);
                table.cost.push(cost);
            }
        }
        Ok(table)
    }

    fn ratios(&self) -> Vec<f64> {
        self.dist.iter().zip(&self.cost).map(|(d, c)| d / c).collect()
    }

    /// Scatters per-pair derivatives `dL/dd` into coordinate gradients.
    fn backprop(&self, pi: &PrototypeSet, d_dist: &[f64]) -> Matrix {
        let mut grads = Matrix::zeros(pi.len(), pi.dim());
        for (i, &(a, b)) in self.pairs.iter().enumerate() {
            let w = d_dist[i] * self.slope[i];
            if w == 0.0 {
                continue;
            }
            let (pa, pb) = (pi.coords.row(a), pi.coords.row(b));
            for j in 0..pi.dim() {
                let g = w * (pa[j] - pb[j]);
                grads.as_mut_slice()[a * pi.dim() + j] += g;
                grads.as_mut_slice()[b * pi.dim() + j] -= g;
            }
        }
        grads
    }
}

/// Mean relative deviation `|d - D| / D` over class pairs.
pub fn distortion(pi: &PrototypeSet, metric: &FiniteMetric, spec: &DistanceSpec) -> Result<f64> {
    let table = PairTable::build(pi, metric, spec)?;
    let terms: Vec<f64> = table.ratios().iter().map(|a| libm::fabs(a - 1.0)).collect();
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Minimizer of `f(s) = sum |s a_i - 1|` together with its certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct L1Scale {
    pub scale: f64,
    /// Ratios sorted non-decreasingly (stable, ties by pair index).
    pub sorted: Vec<f64>,
    /// Position in `sorted` of the selected ratio.
    pub pivot: usize,
}

impl L1Scale {
    /// Solves for the optimal scale of nonnegative ratios.
    ///
    /// The pivot is the first position `i` (in ascending order) where
    /// `sum_{j <= i} a_j >= sum_{j > i} a_j`.
    pub fn solve(ratios: &[f64]) -> Result<Self> {
        if ratios.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::NonFinite("distance ratios"));
        }
        let mut sorted = ratios.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        // suffix[i] = sum_{j >= i} a_j, accumulated from the top for exact ties.
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + sorted[i];
        }
        let mut prefix = 0.0;
        for i in 0..n {
            prefix += sorted[i];
            if prefix >= suffix[i + 1] {
                if sorted[i] <= 0.0 {
                    return Err(Error::DegeneratePrototypes);
                }
                return Ok(Self {
                    scale: 1.0 / sorted[i],
                    sorted,
                    pivot: i,
                });
            }
        }
        Err(Error::DegeneratePrototypes)
    }

    /// `sum |s a - 1|` at `scale`.
    pub fn objective(ratios: &[f64], scale: f64) -> f64 {
        let terms: Vec<f64> = ratios.iter().map(|a| libm::fabs(scale * a - 1.0)).collect();
        pairwise_sum(&terms)
    }

    /// Checks `-sum_{j<i} a_j + sum_{j>i} a_j` lies in `[-a_i, a_i]`, i.e.
    /// zero is a subgradient of `f` at the returned scale.
    pub fn certificate_holds(&self) -> bool {
        let i = self.pivot;
        let below: f64 = self.sorted[..i].iter().sum();
        let above: f64 = self.sorted[i + 1..].iter().sum();
        let g = above - below;
        let slack = 1e-12 * (below + above + self.sorted[i]);
        g >= -self.sorted[i] - slack && g <= self.sorted[i] + slack
    }
}

/// Closed-form minimizer of `sum (s a - 1)^2`.
pub fn l2_scale(ratios: &[f64]) -> Result<f64> {
    let lin: Vec<f64> = ratios.to_vec();
    let quad: Vec<f64> = ratios.iter().map(|a| a * a).collect();
    let den = pairwise_sum(&quad);
    if !(den > 0.0) {
        return Err(Error::DegeneratePrototypes);
    }
    Ok(pairwise_sum(&lin) / den)
}

/// Global scale minimizing the distortion of `s * d`.
pub fn optimal_scale_l1(pi: &PrototypeSet, metric: &FiniteMetric, spec: &DistanceSpec) -> Result<f64> {
    let table = PairTable::build(pi, metric, spec)?;
    Ok(L1Scale::solve(&table.ratios())?.scale)
}

/// Distortion after rescaling all prototype distances optimally.
pub fn scale_free_distortion(pi: &PrototypeSet, metric: &FiniteMetric, spec: &DistanceSpec) -> Result<f64> {
    let table = PairTable::build(pi, metric, spec)?;
    let ratios = table.ratios();
    let sol = L1Scale::solve(&ratios)?;
    Ok(L1Scale::objective(&ratios, sol.scale) / ratios.len() as f64)
}

/// All distortion diagnostics at once.
pub fn distortion_report(pi: &PrototypeSet, metric: &FiniteMetric, spec: &DistanceSpec) -> Result<DistortionReport> {
    let table = PairTable::build(pi, metric, spec)?;
    let ratios = table.ratios();
    let n = ratios.len() as f64;
    let sol = L1Scale::solve(&ratios)?;
    Ok(DistortionReport {
        distortion: L1Scale::objective(&ratios, 1.0) / n,
        scale_free_distortion: L1Scale::objective(&ratios, sol.scale) / n,
        s_star_l1: sol.scale,
        s_star_l2: l2_scale(&ratios)?,
        pair_count: 2 * ratios.len(),
    })
}

/// How the smooth distortion treats the global scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    #[default]
    Optimal,
    /// `s = 1`: plain squared relative distortion.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistoLoss {
    pub value: f64,
    pub scale: f64,
    /// Gradient with respect to the prototype coordinates.
    pub grads: Matrix,
}

/// Smooth scale-free distortion `mean ((s d - D) / D)^2` at the optimal `s`.
///
/// The gradient holds `s` fixed at its optimum: since `s` minimizes the inner
/// problem, its own variation does not contribute to first order.
pub fn disto_loss(pi: &PrototypeSet, metric: &FiniteMetric, spec: &DistanceSpec, mode: ScaleMode) -> Result<DistoLoss> {
    let table = PairTable::build(pi, metric, spec)?;
    let ratios = table.ratios();
    let scale = match mode {
        ScaleMode::Optimal => l2_scale(&ratios)?,
        ScaleMode::Fixed => 1.0,
    };
    let n = ratios.len() as f64;
    let residuals: Vec<f64> = ratios.iter().map(|a| scale * a - 1.0).collect();
    let squares: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    let d_dist: Vec<f64> = residuals
        .iter()
        .zip(&table.cost)
        .map(|(r, c)| 2.0 * r * scale / (c * n))
        .collect();
    Ok(DistoLoss {
        value: pairwise_sum(&squares) / n,
        scale,
        grads: table.backprop(pi, &d_dist),
    })
}

/// Ordered triples `(k, l, m)` of pairwise distinct classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletBatch {
    triplets: Vec<[usize; 3]>,
}

impl TripletBatch {
    pub fn new(n_classes: usize, triplets: Vec<[usize; 3]>) -> Result<Self> {
        for t in &triplets {
            if t.iter().any(|&c| c >= n_classes) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::UnknownClass(alloc::format!("{t:?}")));
            }
        }
        Ok(Self { triplets })
    }

    /// Every ordered triple, `K (K - 1) (K - 2)` of them.
    pub fn exhaustive(n_classes: usize) -> Result<Self> {
        if n_classes < 3 {
            return Err(Error::TooFewClasses {
                needed: 3,
                found: n_classes,
            });
        }
        let mut triplets = Vec::with_capacity(n_classes * (n_classes - 1) * (n_classes - 2));
        for k in 0..n_classes {
            for l in 0..n_classes {
                for m in 0..n_classes {
                    if k != l && l != m && k != m {
                        triplets.push([k, l, m]);
                    }
                }
            }
        }
        Ok(Self { triplets })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[[usize; 3]] {
        &self.triplets
    }
}

/// `size` triples drawn uniformly with replacement.
pub fn sample_triplets<R: Rng + ?Sized>(n_classes: usize, size: usize, rng: &mut R) -> Result<TripletBatch> {
    if n_classes < 3 {
        return Err(Error::TooFewClasses {
            needed: 3,
            found: n_classes,
        });
    }
    if size == 0 {
        return Err(Error::EmptyBatch);
    }
    let triplets = (0..size)
        .map(|_| {
            // Uniform over k, then l != k, then m not in {k, l}.
            let k = rng.random_range(0..n_classes);
            let mut l = rng.random_range(0..n_classes - 1);
            if l >= k {
                l += 1;
            }
            let (lo, hi) = if k < l { (k, l) } else { (l, k) };
            let mut m = rng.random_range(0..n_classes - 2);
            if m >= lo {
                m += 1;
            }
            if m >= hi {
                m += 1;
            }
            [k, l, m]
        })
        .collect();
    Ok(TripletBatch { triplets })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankLoss {
    pub value: f64,
    pub grads: Matrix,
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Binary cross-entropy between the soft ranking `sigmoid(d(k,l) - d(k,m))`
/// and the hard cost ranking `[D(k,l) > D(k,m)]`, averaged over the batch.
pub fn rank_loss(
    pi: &PrototypeSet,
    metric: &FiniteMetric,
    spec: &DistanceSpec,
    batch: &TripletBatch,
) -> Result<RankLoss> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let k_total = pi.len();
    if metric.len() != k_total {
        return Err(Error::DimensionMismatch {
            expected: metric.len(),
            found: k_total,
        });
    }
    let n = batch.len() as f64;
    let dim = pi.dim();
    let mut grads = Matrix::zeros(k_total, dim);
    let mut terms = Vec::with_capacity(batch.len());
    let c = pi.coords();
    for &[k, l, m] in batch.triplets() {
        if k.max(l).max(m) >= k_total {
            return Err(Error::UnknownClass(alloc::format!("{:?}", [k, l, m])));
        }
        let (d_kl, s_kl) = spec.value_and_slope_or_zero(sq_dist(c.row(k), c.row(l)));
        let (d_km, s_km) = spec.value_and_slope_or_zero(sq_dist(c.row(k), c.row(m)));
        let x = d_kl - d_km;
        let target = if metric.cost(k, l) > metric.cost(k, m) {
            1.0
        } else {
            0.0
        };
        // -t log(sig(x)) - (1 - t) log(1 - sig(x))
        terms.push(target * softplus(-x) + (1.0 - target) * softplus(x));
        let dx = (sigmoid(x) - target) / n;
        let (wl, wm) = (dx * s_kl, -dx * s_km);
        let g = grads.as_mut_slice();
        for j in 0..dim {
            let gl = wl * (c.get(k, j) - c.get(l, j));
            let gm = wm * (c.get(k, j) - c.get(m, j));
            g[k * dim + j] += gl + gm;
            g[l * dim + j] -= gl;
            g[m * dim + j] -= gm;
        }
    }
    let value = pairwise_sum(&terms) / n;
    if !value.is_finite() {
        return Err(Error::NonFinite("rank loss"));
    }
    Ok(RankLoss { value, grads })
}

/// Prototype regularizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    #[default]
    Disto,
    DistoFixedScale,
    Rank,
    None,
}

/// Value, gradient and (for the distortion kinds) scale of a regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerValue {
    pub value: f64,
    pub grads: Matrix,
    pub scale: Option<f64>,
}

/// Evaluates `reg` on `pi`. `triplets` is required for [`Regularizer::Rank`].
pub fn regularizer_value(
    reg: Regularizer,
    pi: &PrototypeSet,
    metric: &FiniteMetric,
    spec: &DistanceSpec,
    triplets: Option<&TripletBatch>,
) -> Result<RegularizerValue> {
    match reg {
        Regularizer::Disto | Regularizer::DistoFixedScale => {
            let mode = if reg == Regularizer::Disto {
                ScaleMode::Optimal
            } else {
                ScaleMode::Fixed
            };
            let l = disto_loss(pi, metric, spec, mode)?;
            Ok(RegularizerValue {
                value: l.value,
                grads: l.grads,
                scale: Some(l.scale),
            })
        }
        Regularizer::Rank => {
            let batch = triplets.ok_or(Error::EmptyBatch)?;
            let l = rank_loss(pi, metric, spec, batch)?;
            Ok(RegularizerValue {
                value: l.value,
                grads: l.grads,
                scale: None,
            })
        }
        Regularizer::None => Ok(RegularizerValue {
            value: 0.0,
            grads: Matrix::zeros(pi.len(), pi.dim()),
            scale: None,
        }),
    }
}

/// Outcome of [`fit_prototypes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Largest deterministic triplet set used when fitting with the rank loss;
/// beyond it a fixed sample of this size is drawn once.
pub const MAX_FIT_TRIPLETS: usize = 50_000;

/// Minimizes a regularizer over the prototypes alone by gradient descent
/// with Armijo backtracking. Stops after `max_steps`, when the relative
/// improvement of a step drops below `rel_tol`, or when no decreasing step
/// can be found.
pub fn fit_prototypes<R: Rng + ?Sized>(
    pi: &mut PrototypeSet,
    metric: &FiniteMetric,
    spec: &DistanceSpec,
    reg: Regularizer,
    max_steps: usize,
    rel_tol: f64,
    rng: &mut R,
) -> Result<FitSummary> {
    let triplets = match reg {
        Regularizer::Rank if pi.len() * (pi.len() - 1) * (pi.len().saturating_sub(2)) <= MAX_FIT_TRIPLETS => {
            Some(TripletBatch::exhaustive(pi.len())?)
        }
        Regularizer::Rank => Some(sample_triplets(pi.len(), MAX_FIT_TRIPLETS, rng)?),
        _ => None,
    };
    let eval = |p: &PrototypeSet| regularizer_value(reg, p, metric, spec, triplets.as_ref());

    let mut current = eval(pi)?;
    let initial_loss = current.value;
    let mut step = 1.0;
    let mut steps = 0;
    while steps < max_steps && current.value > 0.0 {
        let g = current.grads.as_slice();
        let g2: f64 = g.iter().map(|x| x * x).sum();
        if g2 == 0.0 {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let coords: Vec<f64> = pi
                .coords
                .as_slice()
                .iter()
                .zip(g)
                .map(|(x, gx)| x - step * gx)
                .collect();
            let trial = pi.with_coords(Matrix::from_vec(pi.len(), pi.dim(), coords)?)?;
            match eval(&trial) {
                Ok(v) if v.value <= current.value - 1e-4 * step * g2 => {
                    accepted = Some((trial, v));
                    break;
                }
                Ok(_) | Err(Error::DegeneratePrototypes) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((next, value)) = accepted else { break };
        steps += 1;
        let improvement = (current.value - value.value) / current.value;
        *pi = next;
        current = value;
        step *= 2.0;
        if improvement < rel_tol {
            break;
        }
    }
    Ok(FitSummary {
        steps,
        initial_loss,
        final_loss: current.value,
    })
}
