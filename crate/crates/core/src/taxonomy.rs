//! Class hierarchies and the cost metrics derived from them.
//!
//! A [`Taxonomy`] is a rooted tree whose leaves are the classes a model
//! predicts. The cost of confusing two classes is the weighted length of the
//! unique tree path between them, which always yields a finite metric.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::linalg::Matrix;
use crate::{Error, Result};

/// One node of a taxonomy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonNode {
    pub name: String,
    pub parent: Option<usize>,
    /// Weight of the edge to the parent. Unused for the root.
    pub weight: f64,
}

/// A validated rooted tree of named classes.
///
/// Node ids are positions in document order (first appearance in the source).
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    nodes: Vec<TaxonNode>,
    children: Vec<Vec<usize>>,
    root: usize,
    depth: Vec<usize>,
}

/// Source format for [`parse_taxonomy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaxonomyFormat {
    /// `child<TAB>parent[<TAB>weight]` lines, `#` comments.
    EdgeList,
    /// Nested `{"name": ..., "children": [...]}` objects.
    JsonTree,
}

/// Which taxonomy nodes index the rows of a cost matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSet {
    Leaves,
    All,
}

impl Taxonomy {
    /// Validates a list of nodes given with parent references.
    pub fn from_nodes(nodes: Vec<TaxonNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::NoNodes);
        }
        let mut seen = BTreeMap::new();
        for (i, node) in nodes.iter().enumerate() {
            if seen.insert(node.name.as_str(), i).is_some() {
                return Err(Error::DuplicateName(node.name.clone()));
            }
            if let Some(p) = node.parent {
                if p >= nodes.len() {
                    return Err(Error::Orphan(node.name.clone()));
                }
                if !(node.weight.is_finite() && node.weight > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "edge weight of `{}` must be positive and finite",
                        node.name
                    )));
                }
            }
        }

        // Walking up from any node must reach a parentless node in < n steps.
        let n = nodes.len();
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = nodes[cur].parent {
                cur = p;
                steps += 1;
                if steps > n {
                    return Err(Error::Cycle(nodes[start].name.clone()));
                }
            }
        }

        let mut roots = nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.parent.is_none())
            .map(|(i, _)| i);
        let root = roots.next().ok_or(Error::NoNodes)?;
        if let Some(other) = roots.next() {
            return Err(Error::MultipleRoots(
                nodes[root].name.clone(),
                nodes[other].name.clone(),
            ));
        }

        let mut children = vec![Vec::new(); n];
        for (i, node) in nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                children[p].push(i);
            }
        }
        let mut depth = vec![0; n];
        let mut stack = vec![root];
        while let Some(u) = stack.pop() {
            for &c in &children[u] {
                depth[c] = depth[u] + 1;
                stack.push(c);
            }
        }

        Ok(Self {
            nodes,
            children,
            root,
            depth,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn node(&self, id: usize) -> &TaxonNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[TaxonNode] {
        &self.nodes
    }

    pub fn name(&self, id: usize) -> &str {
        &self.nodes[id].name
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: usize) -> &[usize] {
        &self.children[id]
    }

    pub fn depth(&self, id: usize) -> usize {
        self.depth[id]
    }

    pub fn is_leaf(&self, id: usize) -> bool {
        self.children[id].is_empty()
    }

    /// Leaf node ids in document order.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_leaf(i)).collect()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Weighted distances from `source` to every node.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::NAN; self.len()];
        dist[source] = 0.0;
        let mut stack = vec![source];
        while let Some(u) = stack.pop() {
            let visit = |v: usize, w: f64, dist: &mut Vec<f64>, stack: &mut Vec<usize>| {
                if dist[v].is_nan() {
                    dist[v] = dist[u] + w;
                    stack.push(v);
                }
            };
            if let Some(p) = self.nodes[u].parent {
                visit(p, self.nodes[u].weight, &mut dist, &mut stack);
            }
            for &c in &self.children[u] {
                visit(c, self.nodes[c].weight, &mut dist, &mut stack);
            }
        }
        dist
    }

    /// Serializes back to the edge-list format.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            if let Some(p) = node.parent {
                out.push_str(&node.name);
                out.push('\t');
                out.push_str(&self.nodes[p].name);
                if node.weight != 1.0 {
                    out.push('\t');
                    out.push_str(&node.weight.to_string());
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Parses a taxonomy from text in the given format.
pub fn parse_taxonomy(text: &str, format: TaxonomyFormat) -> Result<Taxonomy> {
    match format {
        TaxonomyFormat::EdgeList => parse_edge_list(text),
        TaxonomyFormat::JsonTree => parse_json_tree(text),
    }
}

fn parse_edge_list(text: &str) -> Result<Taxonomy> {
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut nodes: Vec<TaxonNode> = Vec::new();
    let mut intern = |name: &str, nodes: &mut Vec<TaxonNode>| -> usize {
        *index.entry(name.to_string()).or_insert_with(|| {
            nodes.push(TaxonNode {
                name: name.to_string(),
                parent: None,
                weight: 1.0,
            });
            nodes.len() - 1
        })
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(parse_err(format!(
                "expected 2 or 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let (child, parent) = (fields[0], fields[1]);
        if child.is_empty() || parent.is_empty() {
            return Err(parse_err("empty node name".to_string()));
        }
        let weight = match fields.get(2) {
            Some(w) => w
                .parse::<f64>()
                .map_err(|_| parse_err(format!("invalid weight `{w}`")))?,
            None => 1.0,
        };
        if !(weight.is_finite() && weight > 0.0) {
            return Err(parse_err(format!("edge weight must be positive, got {weight}")));
        }
        let c = intern(child, &mut nodes);
        let p = intern(parent, &mut nodes);
        if nodes[c].parent.is_some() {
            return Err(Error::DuplicateName(child.to_string()));
        }
        nodes[c].parent = Some(p);
        nodes[c].weight = weight;
    }
    Taxonomy::from_nodes(nodes)
}

fn parse_json_tree(text: &str) -> Result<Taxonomy> {
    if text.trim().is_empty() {
        return Err(Error::NoNodes);
    }
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    let mut nodes = Vec::new();
    match &value {
        Value::Object(_) => collect_json(&value, None, &mut nodes)?,
        Value::Array(items) if items.len() > 1 => {
            let name = |v: &Value| v.get("name").and_then(Value::as_str).unwrap_or("?").to_string();
            return Err(Error::MultipleRoots(name(&items[0]), name(&items[1])));
        }
        Value::Array(items) if items.len() == 1 => collect_json(&items[0], None, &mut nodes)?,
        Value::Array(_) => return Err(Error::NoNodes),
        _ => return Err(json_err("top level must be an object")),
    }
    Taxonomy::from_nodes(nodes)
}

fn json_err(message: &str) -> Error {
    Error::Parse {
        line: 0,
        message: message.to_string(),
    }
}

fn collect_json(value: &Value, parent: Option<usize>, nodes: &mut Vec<TaxonNode>) -> Result<()> {
    let obj = value.as_object().ok_or_else(|| json_err("node must be an object"))?;
    let name = obj
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| json_err("node without a string `name`"))?;
    let weight = match obj.get("weight") {
        Some(w) => w.as_f64().ok_or_else(|| json_err("`weight` must be a number"))?,
        None => 1.0,
    };
    nodes.push(TaxonNode {
        name: name.to_string(),
        parent,
        weight,
    });
    let id = nodes.len() - 1;
    match obj.get("children") {
        None | Some(Value::Null) => {}
        Some(Value::Array(children)) => {
            for child in children {
                collect_json(child, Some(id), nodes)?;
            }
        }
        Some(_) => return Err(json_err("`children` must be an array")),
    }
    Ok(())
}

/// A symmetric cost matrix over a set of classes, validated as a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMetric {
    names: Vec<String>,
    /// Taxonomy node id of each row, when derived from a taxonomy.
    node_ids: Vec<usize>,
    is_leaf: Vec<bool>,
    costs: Matrix,
}

impl FiniteMetric {
    /// Wraps a raw cost matrix, rejecting anything that is not a metric.
    /// Every row is treated as a leaf class.
    pub fn new(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let violations = validate_metric(rows)?;
        if let Some(v) = violations.first() {
            return Err(Error::InvalidMetric(format!("{v:?} ({} violations)", violations.len())));
        }
        if names.len() != rows.len() {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: rows.len(),
            });
        }
        let n = rows.len();
        Ok(Self {
            names,
            node_ids: (0..n).collect(),
            is_leaf: vec![true; n],
            costs: Matrix::from_rows(rows)?,
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    #[inline]
    pub fn cost(&self, k: usize, l: usize) -> f64 {
        self.costs.get(k, l)
    }

    pub fn costs(&self) -> &Matrix {
        &self.costs
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn node_ids(&self) -> &[usize] {
        &self.node_ids
    }

    pub fn is_leaf(&self, k: usize) -> bool {
        self.is_leaf[k]
    }

    /// Rows that are leaf classes, in row order.
    pub fn leaf_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_leaf[k]).collect()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Largest cost.
    pub fn max_cost(&self) -> f64 {
        self.costs.as_slice().iter().copied().fold(0.0, f64::max)
    }

    /// Smallest off-diagonal cost.
    pub fn min_off_diagonal(&self) -> f64 {
        let mut best = f64::INFINITY;
        for k in 0..self.len() {
            for l in 0..self.len() {
                if k != l {
                    best = best.min(self.cost(k, l));
                }
            }
        }
        best
    }

    /// The metric restricted to the given rows (and matching columns).
    pub fn restrict(&self, rows: &[usize]) -> Self {
        let mut costs = Matrix::zeros(rows.len(), rows.len());
        for (i, &k) in rows.iter().enumerate() {
            for (j, &l) in rows.iter().enumerate() {
                costs.set(i, j, self.cost(k, l));
            }
        }
        Self {
            names: rows.iter().map(|&k| self.names[k].clone()).collect(),
            node_ids: rows.iter().map(|&k| self.node_ids[k]).collect(),
            is_leaf: rows.iter().map(|&k| self.is_leaf[k]).collect(),
            costs,
        }
    }

    /// Same node ids, names and costs.
    pub fn same_classes(&self, other: &Self) -> bool {
        self.names == other.names && self.node_ids == other.node_ids
    }
}

/// Shortest-path cost matrix between taxonomy nodes.
pub fn cost_matrix(tax: &Taxonomy, nodes: NodeSet) -> Result<FiniteMetric> {
    let ids: Vec<usize> = match nodes {
        NodeSet::Leaves => tax.leaves(),
        NodeSet::All => (0..tax.len()).collect(),
    };
    if nodes == NodeSet::Leaves && ids.len() < 2 {
        return Err(Error::TooFewLeaves {
            needed: 2,
            found: ids.len(),
        });
    }
    if ids.len() < 2 {
        return Err(Error::TooFewClasses {
            needed: 2,
            found: ids.len(),
        });
    }
    let n = ids.len();
    let mut costs = Matrix::zeros(n, n);
    for (i, &src) in ids.iter().enumerate() {
        let dist = tax.distances_from(src);
        // mirrored so the matrix is exactly symmetric despite summation order
        for (j, &dst) in ids.iter().enumerate().skip(i + 1) {
            costs.set(i, j, dist[dst]);
            costs.set(j, i, dist[dst]);
        }
    }
    Ok(FiniteMetric {
        names: ids.iter().map(|&i| tax.name(i).to_string()).collect(),
        is_leaf: ids.iter().map(|&i| tax.is_leaf(i)).collect(),
        node_ids: ids,
        costs,
    })
}

/// A single failed metric axiom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MetricViolation {
    NonFinite {
        row: usize,
        col: usize,
    },
    NonZeroDiagonal {
        index: usize,
    },
    Asymmetric {
        row: usize,
        col: usize,
    },
    NonPositive {
        row: usize,
        col: usize,
    },
    /// `D[a,b] + D[b,c] < D[a,c]`.
    Triangle {
        a: usize,
        b: usize,
        c: usize,
    },
}

/// Slack for rounding in sums of non-integer weights.
fn tolerance(value: f64) -> f64 {
    1e-12 * libm::fabs(value).max(1.0)
}

/// Lists every violated metric axiom. Pairs are reported once with
/// `row < col`; triangle triples once with `a < c`.
pub fn validate_metric(rows: &[Vec<f64>]) -> Result<Vec<MetricViolation>> {
    let n = rows.len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotSquare {
                row: i,
                len: row.len(),
                expected: n,
            });
        }
    }
    let mut out = Vec::new();
    let mut finite = true;
    for k in 0..n {
        for l in 0..n {
            if !rows[k][l].is_finite() {
                out.push(MetricViolation::NonFinite { row: k, col: l });
                finite = false;
            }
        }
    }
    if !finite {
        return Ok(out);
    }
    for k in 0..n {
        if rows[k][k] != 0.0 {
            out.push(MetricViolation::NonZeroDiagonal { index: k });
        }
        for l in k + 1..n {
            if libm::fabs(rows[k][l] - rows[l][k]) > tolerance(rows[k][l]) {
                out.push(MetricViolation::Asymmetric { row: k, col: l });
            }
            if rows[k][l] <= 0.0 || rows[l][k] <= 0.0 {
                out.push(MetricViolation::NonPositive { row: k, col: l });
            }
        }
    }
    for a in 0..n {
        for c in a + 1..n {
            let direct = rows[a][c];
            for b in 0..n {
                if b == a || b == c {
                    continue;
                }
                let via = rows[a][b] + rows[b][c];
                if via < direct - tolerance(direct) {
                    out.push(MetricViolation::Triangle { a, b, c });
                }
            }
        }
    }
    Ok(out)
}
