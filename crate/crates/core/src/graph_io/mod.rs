//! Graph datasets, condensed graphs, and the structural preprocessing shared
//! by every model.

mod format;
mod normalize;
mod sbm;

pub use format::{load_condensed, load_graph, save_condensed, save_graph, write_atomic};
pub use normalize::{
    centralize_features, dense_neighborhoods, edge_neighborhoods, normalize_dense, normalize_edges,
    NormalizedAdjacency,
};
pub use sbm::{generate_sbm, SbmParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Transductive,
    Inductive,
}

/// A node-classification dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    /// Undirected edges stored once as `(u, v)` with `u < v`, no self-loops.
    pub edges: Vec<(usize, usize)>,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    pub setting: Setting,
}

impl Graph {
    /// Checks every structural invariant. Diagnostics name the file the
    /// offending field is read from.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes;
        if self.features.dim() != (n, self.num_features) {
            return Err(Error::invalid(
                "features.csv",
                format!(
                    "expected {}x{} features, found {:?}",
                    n,
                    self.num_features,
                    self.features.dim()
                ),
            ));
        }
        if self.labels.len() != n {
            return Err(Error::invalid(
                "labels.txt",
                format!("expected {n} labels, found {}", self.labels.len()),
            ));
        }
        if let Some((i, y)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y >= self.num_classes)
        {
            return Err(Error::parse(
                "labels.txt",
                i + 1,
                format!("label {y} outside [0,{})", self.num_classes),
            ));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.edges.len());
        for (k, &(u, v)) in self.edges.iter().enumerate() {
            if u == v {
                return Err(Error::parse(
                    "edges.txt",
                    k + 1,
                    format!("self-loop {u} {v}"),
                ));
            }
            if u >= n || v >= n {
                return Err(Error::parse(
                    "edges.txt",
                    k + 1,
                    format!("endpoint out of range [0,{n})"),
                ));
            }
            if u > v {
                return Err(Error::parse("edges.txt", k + 1, "edge not stored as u < v"));
            }
            if !seen.insert((u, v)) {
                return Err(Error::parse(
                    "edges.txt",
                    k + 1,
                    format!("duplicate edge {u} {v}"),
                ));
            }
        }
        let mut owner = vec![None; n];
        for (name, idx) in [
            ("train", &self.train_idx),
            ("val", &self.val_idx),
            ("test", &self.test_idx),
        ] {
            if idx.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(
                    "splits.json",
                    format!("{name} indices must be sorted and unique"),
                ));
            }
            for &i in idx.iter() {
                if i >= n {
                    return Err(Error::invalid(
                        "splits.json",
                        format!("{name} index {i} out of range [0,{n})"),
                    ));
                }
                if let Some(other) = owner[i] {
                    return Err(Error::invalid(
                        "splits.json",
                        format!("node {i} is in both {other} and {name}"),
                    ));
                }
                owner[i] = Some(name);
            }
        }
        let per_class = class_partition(&self.labels, &self.train_idx, self.num_classes);
        if let Some(c) = per_class.iter().position(|p| p.is_empty()) {
            return Err(Error::invalid(
                "splits.json",
                format!("class {c} has no training node"),
            ));
        }
        Ok(())
    }

    /// The subgraph induced by `nodes` (sorted), with nodes renumbered in
    /// order. Split lists keep only members of `nodes`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut remap = vec![usize::MAX; self.num_nodes];
        for (new, &old) in nodes.iter().enumerate() {
            remap[old] = new;
        }
        let keep = |idx: &[usize]| -> Vec<usize> {
            idx.iter()
                .filter(|&&i| remap[i] != usize::MAX)
                .map(|&i| remap[i])
                .collect()
        };
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| remap[u] != usize::MAX && remap[v] != usize::MAX)
            .map(|&(u, v)| (remap[u], remap[v]))
            .collect();
        Graph {
            num_nodes: nodes.len(),
            num_features: self.num_features,
            num_classes: self.num_classes,
            edges,
            features: self.features.select(ndarray::Axis(0), nodes),
            labels: nodes.iter().map(|&i| self.labels[i]).collect(),
            train_idx: keep(&self.train_idx),
            val_idx: keep(&self.val_idx),
            test_idx: keep(&self.test_idx),
            setting: self.setting,
        }
    }
}

/// The learned artifact: condensed features, dense adjacency, fixed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedGraph {
    pub x_hat: Matrix,
    pub a_hat: Matrix,
    pub y_hat: Vec<usize>,
    pub num_classes: usize,
    /// Threshold applied to `a_hat`, if any.
    pub gamma: Option<f64>,
}

impl CondensedGraph {
    pub fn num_nodes(&self) -> usize {
        self.x_hat.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.x_hat.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x_hat.nrows();
        if self.a_hat.dim() != (n, n) || self.y_hat.len() != n {
            return Err(Error::Invariant(format!(
                "condensed shapes disagree: x {:?}, a {:?}, y {}",
                self.x_hat.dim(),
                self.a_hat.dim(),
                self.y_hat.len()
            )));
        }
        for i in 0..n {
            if self.a_hat[[i, i]] != 1.0 {
                return Err(Error::Invariant(format!(
                    "adjacency diagonal ({i},{i}) != 1"
                )));
            }
            for j in 0..i {
                let (a, b) = (self.a_hat[[i, j]], self.a_hat[[j, i]]);
                if a != b {
                    return Err(Error::Invariant(format!(
                        "adjacency asymmetric at ({i},{j})"
                    )));
                }
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Invariant(format!(
                        "adjacency ({i},{j}) = {a} outside [0,1]"
                    )));
                }
            }
        }
        if let Some(&y) = self.y_hat.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Invariant(format!(
                "condensed label {y} out of range"
            )));
        }
        if self.x_hat.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invariant("condensed features are not finite".into()));
        }
        Ok(())
    }

    /// Undirected edges: nonzero strictly-upper-triangle entries of `a_hat`.
    pub fn num_edges(&self) -> usize {
        let n = self.num_nodes();
        (0..n)
            .map(|i| ((i + 1)..n).filter(|&j| self.a_hat[[i, j]] != 0.0).count())
            .sum()
    }
}

/// Per-class index lists: list `c` holds the members of `idx` labelled `c`,
/// ascending.
pub fn class_partition(labels: &[usize], idx: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_classes];
    for &i in idx {
        out[labels[i]].push(i);
    }
    for list in &mut out {
        list.sort_unstable();
    }
    out
}
