//! Evaluation protocol: train fresh models on a condensed graph, test them
//! on the original graph, aggregate over seeds, and report.

mod report;

pub use report::{emit_report, load_report, Report, ReportRun};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph_io::{centralize_features, CondensedGraph, Graph};
use crate::models::{train_eval_model, Arch, Encoder, EncoderGraph, GraphView, TrainHyper};
use crate::tensor::Matrix;

/// Accuracy over seeds for one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub arch: Arch,
    pub seeds: Vec<u64>,
    pub accs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator; 0 for one seed).
    pub std: f64,
    /// SHA-256 of every input of the evaluation.
    pub fingerprint: String,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn hash_matrix(h: &mut Sha256, m: &Matrix) {
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for v in m.iter() {
        h.update(v.to_bits().to_le_bytes());
    }
}

fn hash_indices(h: &mut Sha256, xs: &[usize]) {
    h.update((xs.len() as u64).to_le_bytes());
    for &x in xs {
        h.update((x as u64).to_le_bytes());
    }
}

fn fingerprint(
    condensed: &CondensedGraph,
    phi: &Encoder,
    original: &Graph,
    arch: Arch,
    seeds: &[u64],
    hyper: &TrainHyper,
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(arch.name().as_bytes());
    h.update(serde_json::to_vec(hyper)?);
    h.update(serde_json::to_vec(seeds)?);
    hash_matrix(&mut h, &condensed.x_hat);
    hash_matrix(&mut h, &condensed.a_hat);
    hash_indices(&mut h, &condensed.y_hat);
    h.update(serde_json::to_vec(&phi.spec())?);
    for (name, m) in phi.params().iter() {
        h.update(name.as_bytes());
        hash_matrix(&mut h, m);
    }
    hash_matrix(&mut h, &original.features);
    let flat: Vec<usize> = original.edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    hash_indices(&mut h, &flat);
    hash_indices(&mut h, &original.labels);
    hash_indices(&mut h, &original.train_idx);
    hash_indices(&mut h, &original.val_idx);
    hash_indices(&mut h, &original.test_idx);
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Original-graph view whose features pass through the condenser:
/// `Φ(A, centralize(X))` on the full graph.
pub fn encoded_view(original: &Graph, phi: &Encoder) -> Result<GraphView> {
    let eg = EncoderGraph::from_edges(original.num_nodes, &original.edges);
    let x = phi.encode(&eg, &centralize_features(&original.features))?;
    GraphView::from_graph(original, x)
}

/// Trains `arch` on the condensed graph once per seed (in parallel) and
/// scores each model on the original graph's test nodes, selecting the
/// epoch by validation accuracy on the original graph.
pub fn evaluate(
    condensed: &CondensedGraph,
    phi: &Encoder,
    original: &Graph,
    arch: Arch,
    seeds: &[u64],
    hyper: &TrainHyper,
) -> Result<EvalResult> {
    if condensed.num_features() != phi.output_dim() || phi.input_dim() != original.num_features {
        return Err(Error::Shape {
            op: "evaluate",
            lhs: condensed.x_hat.dim(),
            rhs: (phi.input_dim(), phi.output_dim()),
        });
    }
    if original.test_idx.is_empty() {
        return Err(Error::Domain {
            op: "evaluate",
            msg: "the original graph has no test nodes".into(),
        });
    }
    if seeds.is_empty() {
        return Err(Error::Config(
            "at least one evaluation seed is required".into(),
        ));
    }
    let train = GraphView::from_condensed(condensed);
    let eval = encoded_view(original, phi)?;
    let all: Vec<usize> = (0..condensed.num_nodes()).collect();
    let accs = seeds
        .par_iter()
        .map(|&s| {
            train_eval_model(
                &train,
                &all,
                &eval,
                &original.val_idx,
                &original.test_idx,
                arch,
                hyper,
                s,
            )
            .map(|o| o.test_acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&accs);
    Ok(EvalResult {
        arch,
        seeds: seeds.to_vec(),
        accs,
        mean,
        std,
        fingerprint: fingerprint(condensed, phi, original, arch, seeds, hyper)?,
    })
}

/// Trains `arch` directly on the original graph's training nodes.
pub fn evaluate_original(
    original: &Graph,
    arch: Arch,
    seeds: &[u64],
    hyper: &TrainHyper,
) -> Result<Vec<f64>> {
    let view = GraphView::from_graph(original, centralize_features(&original.features))?;
    seeds
        .par_iter()
        .map(|&s| {
            train_eval_model(
                &view,
                &original.train_idx,
                &view,
                &original.val_idx,
                &original.test_idx,
                arch,
                hyper,
                s,
            )
            .map(|o| o.test_acc)
        })
        .collect()
}

/// Size statistics of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    /// `1 − (2|E| + N) / N²`.
    pub sparsity: f64,
    /// `4·N·D + 8·|E| + 4·N`.
    pub storage_bytes: u64,
    /// Storage plus 4 bytes per condenser weight, for condensed graphs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub storage_bytes_with_params: Option<u64>,
}

fn stats(nodes: usize, edges: usize, features: usize, classes: usize) -> GraphStats {
    let n = nodes as f64;
    let sparsity = if nodes == 0 {
        0.0
    } else {
        1.0 - (2.0 * edges as f64 + n) / (n * n)
    };
    GraphStats {
        nodes,
        edges,
        features,
        classes,
        sparsity,
        storage_bytes: 4 * (nodes as u64) * (features as u64) + 8 * edges as u64 + 4 * nodes as u64,
        storage_bytes_with_params: None,
    }
}

pub fn graph_stats(g: &Graph) -> GraphStats {
    stats(g.num_nodes, g.edges.len(), g.num_features, g.num_classes)
}

/// Statistics of a condensed graph; edges are the nonzero strictly upper
/// triangle of the stored adjacency.
pub fn condensed_stats(cg: &CondensedGraph, phi: Option<&Encoder>) -> GraphStats {
    let mut s = stats(
        cg.num_nodes(),
        cg.num_edges(),
        cg.num_features(),
        cg.num_classes,
    );
    if let Some(phi) = phi {
        let weights: usize = phi.params().iter().map(|(_, m)| m.len()).sum();
        s.storage_bytes_with_params = Some(s.storage_bytes + 4 * weights as u64);
    }
    s
}
