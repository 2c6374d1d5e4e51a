use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Matrix;

use super::{Graph, Setting};

/// Stochastic block model with orthogonal class-mean features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub dim: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

fn infeasible(msg: impl Into<String>) -> Error {
    Error::Config(format!("infeasible SBM: {}", msg.into()))
}

/// Generates a transductive dataset.
///
/// Classes are contiguous, near-equal blocks of node ids. The mean of class
/// `c` is the indicator of feature columns `j` with `j mod C == c`, so class
/// means are orthogonal whenever `dim >= C`. Each class is split 50/25/25
/// into train/val/test after a seeded shuffle.
pub fn generate_sbm(p: &SbmParams) -> Result<Graph> {
    let (n, c) = (p.num_nodes, p.num_classes);
    if c == 0 || n < c {
        return Err(infeasible(format!("{n} nodes cannot fill {c} classes")));
    }
    if p.dim < c {
        return Err(infeasible(format!(
            "dim {} is too small for {c} orthogonal class means",
            p.dim
        )));
    }
    if !(0.0 <= p.p_out && p.p_out < p.p_in && p.p_in <= 1.0) {
        return Err(infeasible(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            p.p_in, p.p_out
        )));
    }
    if !(p.feature_noise >= 0.0 && p.feature_noise.is_finite()) {
        return Err(infeasible("feature_noise must be finite and nonnegative"));
    }

    let labels: Vec<usize> = (0..n).map(|i| i * c / n).collect();

    let mut edge_rng = rng::stream(p.seed, "sbm/edges");
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let prob = if labels[u] == labels[v] {
                p.p_in
            } else {
                p.p_out
            };
            if edge_rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }

    let mut feat_rng = rng::stream(p.seed, "sbm/features");
    let mut features = Matrix::zeros((n, p.dim));
    for (i, mut row) in features.outer_iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            let mean = if j % c == labels[i] { 1.0 } else { 0.0 };
            let z: f64 = feat_rng.sample(StandardNormal);
            *x = mean + p.feature_noise * z;
        }
    }

    let mut split_rng = rng::stream(p.seed, "sbm/splits");
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for class in 0..c {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut split_rng);
        let m = members.len();
        let n_train = ((m as f64 * 0.5).round() as usize).max(1);
        let n_val = ((m as f64 * 0.25).floor() as usize).min(m - n_train);
        train.extend_from_slice(&members[..n_train]);
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    let graph = Graph {
        num_nodes: n,
        num_features: p.dim,
        num_classes: c,
        edges,
        features,
        labels,
        train_idx: train,
        val_idx: val,
        test_idx: test,
        setting: Setting::Transductive,
    };
    graph.validate()?;
    Ok(graph)
}
