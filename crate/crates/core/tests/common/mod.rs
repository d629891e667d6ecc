#![allow(dead_code)]

use guided_proto::taxonomy::TaxonNode;
use guided_proto::{FiniteMetric, Matrix, PrototypeSet, Taxonomy};
use rand::Rng;
use std::collections::VecDeque;

pub const TOY: &str = "a1\tA\na2\tA\nb1\tB\nA\troot\nB\troot\n";

pub const BINARY8: &str = "l0\tc0\nl1\tc0\nl2\tc1\nl3\tc1\nl4\tc2\nl5\tc2\nl6\tc3\nl7\tc3\n\
                           c0\tb0\nc1\tb0\nc2\tb1\nc3\tb1\nb0\troot\nb1\troot\n";

/// Random rooted tree: node `i > 0` hangs under a uniform earlier node.
pub fn random_tree<R: Rng>(n: usize, weighted: bool, rng: &mut R) -> Taxonomy {
    let nodes = (0..n)
        .map(|i| TaxonNode {
            name: format!("n{i}"),
            parent: (i > 0).then(|| rng.random_range(0..i)),
            weight: if weighted { rng.random_range(0.5..3.0) } else { 1.0 },
        })
        .collect();
    Taxonomy::from_nodes(nodes).unwrap()
}

/// Shortest-path lengths between all nodes, by breadth-first relaxation over
/// the undirected edge list.
pub fn bfs_distances(tax: &Taxonomy) -> Vec<Vec<f64>> {
    let n = tax.len();
    let mut adj = vec![Vec::new(); n];
    for (i, node) in tax.nodes().iter().enumerate() {
        if let Some(p) = node.parent {
            adj[i].push((p, node.weight));
            adj[p].push((i, node.weight));
        }
    }
    (0..n)
        .map(|s| {
            let mut dist = vec![f64::INFINITY; n];
            dist[s] = 0.0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &(v, w) in &adj[u] {
                    if dist[v].is_infinite() {
                        dist[v] = dist[u] + w;
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Random tree metric over `k` classes (all nodes of a random weighted tree).
pub fn random_tree_metric<R: Rng>(k: usize, rng: &mut R) -> FiniteMetric {
    let tax = random_tree(k, true, rng);
    let rows = bfs_distances(&tax);
    FiniteMetric::new((0..k).map(|i| format!("c{i}")).collect(), &rows).unwrap()
}

pub fn gaussian_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_prototypes<R: Rng>(metric: &FiniteMetric, dim: usize, rng: &mut R) -> PrototypeSet {
    PrototypeSet::for_metric(metric, gaussian_matrix(metric.len(), dim, rng)).unwrap()
}

/// Ratios `d / D` over unordered pairs, computed directly.
pub fn pair_ratios(pi: &PrototypeSet, metric: &FiniteMetric) -> Vec<f64> {
    let mut out = Vec::new();
    for a in 0..pi.len() {
        for b in a + 1..pi.len() {
            let d: f64 = pi
                .coords()
                .row(a)
                .iter()
                .zip(pi.coords().row(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            out.push(d / metric.cost(a, b));
        }
    }
    out
}

/// `sum_pairs |s * alpha - 1|`.
pub fn l1_objective(ratios: &[f64], s: f64) -> f64 {
    ratios.iter().map(|a| (s * a - 1.0).abs()).sum()
}
