use std::sync::Arc;

use crate::tensor::{CsrMatrix, Matrix};

/// `D̃^{-1/2}(A+I)D̃^{-1/2}` stored sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    csr: Arc<CsrMatrix>,
}

impl NormalizedAdjacency {
    pub fn csr(&self) -> &Arc<CsrMatrix> {
        &self.csr
    }

    pub fn num_nodes(&self) -> usize {
        self.csr.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn to_dense(&self) -> Matrix {
        self.csr.to_dense()
    }

    /// `P̃^k · x`.
    pub fn propagate(&self, x: &Matrix, k: usize) -> Matrix {
        let mut out = x.clone();
        for _ in 0..k {
            out = self
                .csr
                .matmul_dense(&out)
                .expect("row count matches node count");
        }
        out
    }
}

/// Normalizes an undirected edge list (no self-loops) on `num_nodes` nodes.
/// Every node gets a self-loop, so isolated nodes have degree 1.
pub fn normalize_edges(num_nodes: usize, edges: &[(usize, usize)]) -> NormalizedAdjacency {
    let mut degree = vec![1.0f64; num_nodes];
    for &(u, v) in edges {
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let mut triplets = Vec::with_capacity(num_nodes + 2 * edges.len());
    let w = |i: usize, j: usize| 1.0 / (degree[i] * degree[j]).sqrt();
    for i in 0..num_nodes {
        triplets.push((i, i, w(i, i)));
    }
    for &(u, v) in edges {
        triplets.push((u, v, w(u, v)));
        triplets.push((v, u, w(v, u)));
    }
    let csr = CsrMatrix::from_triplets(num_nodes, num_nodes, triplets)
        .expect("validated edge list has no duplicates");
    NormalizedAdjacency { csr: Arc::new(csr) }
}

/// Normalizes a dense symmetric weighted adjacency with entries in `[0,1]`.
///
/// The diagonal of `a` is replaced by the unit self-loop, so a condensed
/// adjacency (diagonal already 1) and a 0/1 copy of an edge list normalize
/// to the same operator as [`normalize_edges`].
pub fn normalize_dense(a: &Matrix) -> NormalizedAdjacency {
    let n = a.nrows();
    let weight = |i: usize, j: usize| if i == j { 1.0 } else { a[[i, j]] };
    let degree: Vec<f64> = (0..n).map(|i| (0..n).map(|j| weight(i, j)).sum()).collect();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let w = weight(i, j);
            if w != 0.0 {
                triplets.push((i, j, w / (degree[i] * degree[j]).sqrt()));
            }
        }
    }
    let csr = CsrMatrix::from_triplets(n, n, triplets).expect("dense scan has unique entries");
    NormalizedAdjacency { csr: Arc::new(csr) }
}

/// Closed neighborhoods `N(i) ∪ {i}` of an edge list, as a 0/1 pattern.
pub fn edge_neighborhoods(num_nodes: usize, edges: &[(usize, usize)]) -> Arc<CsrMatrix> {
    let mut triplets: Vec<(usize, usize, f64)> = (0..num_nodes).map(|i| (i, i, 1.0)).collect();
    for &(u, v) in edges {
        triplets.push((u, v, 1.0));
        triplets.push((v, u, 1.0));
    }
    Arc::new(
        CsrMatrix::from_triplets(num_nodes, num_nodes, triplets)
            .expect("validated edge list has no duplicates"),
    )
}

/// Closed neighborhoods of a dense adjacency: nonzero entries plus the diagonal.
pub fn dense_neighborhoods(a: &Matrix) -> Arc<CsrMatrix> {
    let n = a.nrows();
    let mut triplets = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || a[[i, j]] != 0.0 {
                triplets.push((i, j, 1.0));
            }
        }
    }
    Arc::new(CsrMatrix::from_triplets(n, n, triplets).expect("dense scan has unique entries"))
}

/// Subtracts each row's mean: `X (I − 11ᵀ/D)`.
pub fn centralize_features(x: &Matrix) -> Matrix {
    let d = x.ncols() as f64;
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
    }
    out
}
