//! Prediction schemes: nearest prototype, minimum expected cost, any-node.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::distortion::PrototypeSet;
use crate::geometry::DistanceSpec;
use crate::linalg::{argmax, argmin, sq_dist, Matrix};
use crate::model::posterior;
use crate::taxonomy::{FiniteMetric, Taxonomy};
use crate::{Error, Result};

const BUCKET: usize = 8;

#[derive(Debug, Clone, PartialEq)]
enum KdNode {
    Bucket {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact nearest-point index (KD-tree) over a fixed set of points.
///
/// Distances are Euclidean. Every supported distance kind is increasing in
/// the Euclidean norm, so the nearest point is the same for all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeIndex {
    points: Matrix,
    /// Point indices, permuted so every bucket is a contiguous range.
    order: Vec<usize>,
    nodes: Vec<KdNode>,
}

impl PrototypeIndex {
    pub fn new(points: Matrix) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::TooFewClasses { needed: 1, found: 0 });
        }
        if !points.is_finite() {
            return Err(Error::NonFinite("prototype coordinates"));
        }
        let mut index = Self {
            order: (0..points.rows()).collect(),
            points,
            nodes: Vec::new(),
        };
        index.build(0, index.order.len());
        Ok(index)
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= BUCKET {
            self.nodes.push(KdNode::Bucket { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let points = &self.points;
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points.get(a, dim).total_cmp(&points.get(b, dim)).then(a.cmp(&b))
        });
        let value = self.points.get(self.order[mid], dim);
        self.nodes.push(KdNode::Bucket { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = KdNode::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut best = (f64::NEG_INFINITY, 0);
        for j in 0..self.points.cols() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let x = self.points.get(i, j);
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi - lo > best.0 {
                best = (hi - lo, j);
            }
        }
        best.1
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Matrix {
        &self.points
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, q: &[f64]) -> Result<usize> {
        self.check(q)?;
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(0, q, &mut best);
        Ok(best.1)
    }

    /// Linear scan with the same tie rule as [`PrototypeIndex::nearest`].
    pub fn nearest_exhaustive(&self, q: &[f64]) -> Result<usize> {
        self.check(q)?;
        let mut best = (f64::INFINITY, usize::MAX);
        for i in 0..self.len() {
            let d2 = sq_dist(q, self.points.row(i));
            if d2 < best.0 || (d2 == best.0 && i < best.1) {
                best = (d2, i);
            }
        }
        Ok(best.1)
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("query"));
        }
        Ok(())
    }

    fn search(&self, node: usize, q: &[f64], best: &mut (f64, usize)) {
        match self.nodes[node] {
            KdNode::Bucket { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = sq_dist(q, self.points.row(i));
                    if d2 < best.0 || (d2 == best.0 && i < best.1) {
                        *best = (d2, i);
                    }
                }
            }
            KdNode::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // equal bound still visited: a tie there may have a lower index
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Index over the leaf prototypes of `pi`; results are leaf class indices.
pub fn build_index(pi: &PrototypeSet) -> Result<PrototypeIndex> {
    PrototypeIndex::new(pi.leaf_coords())
}

/// Decision rule turning a leaf posterior into a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    MaxProb,
    #[serde(alias = "min-ec")]
    MinExpectedCost,
    AnyNode,
}

/// Costs of predicting each candidate node when the truth is each leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    /// Metric row of each candidate.
    candidates: Vec<usize>,
    node_ids: Vec<usize>,
    is_leaf: Vec<bool>,
    /// candidates x leaves
    costs: Matrix,
}

impl CostTable {
    /// Candidates are all rows of `metric` when `all_rows`, otherwise its leaf rows.
    /// Columns are always the leaf rows.
    pub fn new(metric: &FiniteMetric, all_rows: bool) -> Self {
        let leaves = metric.leaf_rows();
        let candidates: Vec<usize> = if all_rows {
            (0..metric.len()).collect()
        } else {
            leaves.clone()
        };
        let mut costs = Matrix::zeros(candidates.len(), leaves.len());
        for (i, &k) in candidates.iter().enumerate() {
            for (j, &l) in leaves.iter().enumerate() {
                costs.set(i, j, metric.cost(k, l));
            }
        }
        Self {
            node_ids: candidates.iter().map(|&k| metric.node_ids()[k]).collect(),
            is_leaf: candidates.iter().map(|&k| metric.is_leaf(k)).collect(),
            candidates,
            costs,
        }
    }

    pub fn n_candidates(&self) -> usize {
        self.costs.rows()
    }

    pub fn n_leaves(&self) -> usize {
        self.costs.cols()
    }

    pub fn costs(&self) -> &Matrix {
        &self.costs
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn is_leaf(&self) -> &[bool] {
        &self.is_leaf
    }
}

/// `EC(k) = sum_l p_l * cost(k, l)` for every candidate `k`.
pub fn expected_costs(posterior: &[f64], table: &CostTable) -> Result<Vec<f64>> {
    if posterior.len() != table.n_leaves() {
        return Err(Error::DimensionMismatch {
            expected: table.n_leaves(),
            found: posterior.len(),
        });
    }
    Ok((0..table.n_candidates())
        .map(|k| table.costs.row(k).iter().zip(posterior).map(|(c, p)| c * p).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Metric row of the prediction. For leaf-only metrics this is the class index.
    pub row: usize,
    /// Taxonomy node id (metric row id when the metric has no taxonomy).
    pub node_id: usize,
    pub is_leaf: bool,
    pub scheme: Scheme,
    pub posterior: Vec<f64>,
    /// One entry per candidate; absent for max-prob.
    pub expected_costs: Option<Vec<f64>>,
}

impl Prediction {
    /// Expected cost of the predicted node, when computed.
    pub fn expected_cost(&self, table: &CostTable) -> Option<f64> {
        let ec = self.expected_costs.as_ref()?;
        table.candidates.iter().position(|&k| k == self.row).map(|i| ec[i])
    }
}

/// Applies a scheme to a posterior. `table` must have been built with all rows
/// for [`Scheme::AnyNode`] and leaf rows otherwise.
pub fn decide(posterior: Vec<f64>, scheme: Scheme, table: &CostTable) -> Result<Prediction> {
    let (choice, ec) = match scheme {
        Scheme::MaxProb => {
            if posterior.len() != table.n_leaves() {
                return Err(Error::DimensionMismatch {
                    expected: table.n_leaves(),
                    found: posterior.len(),
                });
            }
            // leaf candidates come first in a leaf-only table
            (argmax(&posterior).ok_or(Error::EmptyBatch)?, None)
        }
        Scheme::MinExpectedCost | Scheme::AnyNode => {
            let ec = expected_costs(&posterior, table)?;
            (argmin(&ec).ok_or(Error::EmptyBatch)?, Some(ec))
        }
    };
    let choice = if scheme == Scheme::MaxProb {
        table
            .is_leaf
            .iter()
            .enumerate()
            .filter(|(_, &l)| l)
            .nth(choice)
            .map(|(i, _)| i)
            .ok_or(Error::EmptyBatch)?
    } else {
        choice
    };
    Ok(Prediction {
        row: table.candidates[choice],
        node_id: table.node_ids[choice],
        is_leaf: table.is_leaf[choice],
        scheme,
        posterior,
        expected_costs: ec,
    })
}

/// Nearest leaf prototype, found through the index.
pub fn predict_max_prob(
    e: &[f64],
    index: &PrototypeIndex,
    pi: &PrototypeSet,
    spec: &DistanceSpec,
) -> Result<Prediction> {
    if index.len() != pi.n_leaves() {
        return Err(Error::DimensionMismatch {
            expected: pi.n_leaves(),
            found: index.len(),
        });
    }
    let class = index.nearest(e)?;
    let row = pi.leaf_rows()[class];
    Ok(Prediction {
        row: class,
        node_id: pi.node_ids()[row],
        is_leaf: true,
        scheme: Scheme::MaxProb,
        posterior: posterior(e, pi, spec)?,
        expected_costs: None,
    })
}

/// Leaf with the smallest expected cost under the prototype posterior.
pub fn predict_min_expected_cost(
    e: &[f64],
    pi: &PrototypeSet,
    spec: &DistanceSpec,
    leaves: &FiniteMetric,
) -> Result<Prediction> {
    if leaves.len() != pi.n_leaves() || leaves.leaf_rows().len() != leaves.len() {
        return Err(Error::DimensionMismatch {
            expected: pi.n_leaves(),
            found: leaves.len(),
        });
    }
    decide(
        posterior(e, pi, spec)?,
        Scheme::MinExpectedCost,
        &CostTable::new(leaves, false),
    )
}

/// Taxonomy node (leaf or internal) with the smallest expected cost.
pub fn predict_any_node(
    e: &[f64],
    pi: &PrototypeSet,
    spec: &DistanceSpec,
    all_nodes: &FiniteMetric,
    tax: &Taxonomy,
) -> Result<Prediction> {
    check_covers_taxonomy(all_nodes, tax)?;
    if tax.leaves().len() != pi.n_leaves() {
        return Err(Error::DimensionMismatch {
            expected: tax.leaves().len(),
            found: pi.n_leaves(),
        });
    }
    decide(
        posterior(e, pi, spec)?,
        Scheme::AnyNode,
        &CostTable::new(all_nodes, true),
    )
}

/// Checks that `metric` is the all-nodes cost matrix of `tax`.
pub fn check_covers_taxonomy(metric: &FiniteMetric, tax: &Taxonomy) -> Result<()> {
    let matches = metric.len() == tax.len()
        && metric
            .node_ids()
            .iter()
            .enumerate()
            .all(|(i, &id)| i == id && metric.names()[i] == tax.name(id));
    if matches {
        Ok(())
    } else {
        Err(Error::MismatchedClassSets)
    }
}

/// Uniform 0/1 metric over `k` classes.
pub fn uniform_metric(names: Vec<alloc::string::String>) -> Result<FiniteMetric> {
    let k = names.len();
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
        .collect();
    FiniteMetric::new(names, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::{cost_matrix, parse_taxonomy, NodeSet, TaxonomyFormat};
    use alloc::string::ToString;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOY: &str = "a1\tA\na2\tA\nb1\tB\nA\troot\nB\troot\n";

    #[test]
    fn singleton_index() {
        let idx = PrototypeIndex::new(Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap();
        assert_eq!(idx.nearest(&[100.0, -3.0]).unwrap(), 0);
    }

    #[test]
    fn duplicates_pick_lowest() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 5) as f64, 0.0]).collect();
        let idx = PrototypeIndex::new(Matrix::from_rows(&rows).unwrap()).unwrap();
        for i in 0..5 {
            assert_eq!(idx.nearest(&[i as f64, 0.0]).unwrap(), i);
        }
        // midway between 1 and 2
        assert_eq!(idx.nearest(&[1.5, 0.0]).unwrap(), 1);
    }

    #[test]
    fn kd_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let idx = PrototypeIndex::new(Matrix::from_rows(&rows).unwrap()).unwrap();
        for _ in 0..300 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            assert_eq!(idx.nearest(&q).unwrap(), idx.nearest_exhaustive(&q).unwrap());
        }
    }

    #[test]
    fn any_node_toy() {
        let tax = parse_taxonomy(TOY, TaxonomyFormat::EdgeList).unwrap();
        let all = cost_matrix(&tax, NodeSet::All).unwrap();
        let table = CostTable::new(&all, true);
        // leaves in order a1, a2, b1
        let p = decide(vec![0.5, 0.5, 0.0], Scheme::AnyNode, &table).unwrap();
        assert_eq!(tax.name(p.node_id), "a1");
        let ec = p.expected_costs.unwrap();
        assert_eq!(ec[tax.find("A").unwrap()], 1.0);
        assert_eq!(ec[tax.find("a2").unwrap()], 1.0);
        let p = decide(vec![0.9, 0.1, 0.0], Scheme::AnyNode, &table).unwrap();
        assert_eq!(tax.name(p.node_id), "a1");
        let p = decide(vec![0.0, 0.0, 1.0], Scheme::AnyNode, &table).unwrap();
        assert_eq!(tax.name(p.node_id), "b1");
        // spread over a-branch and b1 → internal node wins
        let p = decide(vec![0.35, 0.35, 0.3], Scheme::AnyNode, &table).unwrap();
        assert!(!p.is_leaf);
    }

    #[test]
    fn uniform_metric_min_ec_is_max_prob() {
        let names = (0..4).map(|i| i.to_string()).collect();
        let m = uniform_metric(names).unwrap();
        let table = CostTable::new(&m, false);
        let p = vec![0.1, 0.4, 0.3, 0.2];
        let ec = expected_costs(&p, &table).unwrap();
        for k in 0..4 {
            assert!((ec[k] - (1.0 - p[k])).abs() < 1e-15);
        }
        assert_eq!(decide(p.clone(), Scheme::MinExpectedCost, &table).unwrap().row, 1);
        assert_eq!(decide(p, Scheme::MaxProb, &table).unwrap().row, 1);
    }

    #[test]
    fn mismatched_taxonomy_rejected() {
        let tax = parse_taxonomy(TOY, TaxonomyFormat::EdgeList).unwrap();
        let leaves = cost_matrix(&tax, NodeSet::Leaves).unwrap();
        assert!(check_covers_taxonomy(&leaves, &tax).is_err());
    }
}
