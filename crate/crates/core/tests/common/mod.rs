//! Fixtures and checks shared by the integration tests and the acceptance
//! report.
#![allow(dead_code)]

pub mod invariants;

use std::sync::Arc;

use gcondense::condense::{matching_loss, CondenserConfig, MatchingInputs};
use gcondense::graph_io::{generate_sbm, normalize_edges, Graph, SbmParams};
use gcondense::models::{normalize_on_tape, sgc_loss_grads};
use gcondense::rng;
use gcondense::tensor::{Matrix, Tape};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;

/// Entries uniform in `[−scale, scale]`.
pub fn uniform(seed: u64, rows: usize, cols: usize, scale: f64) -> Matrix {
    let mut r = rng::stream(seed, "test/uniform");
    Matrix::from_shape_fn((rows, cols), |_| r.random_range(-scale..=scale))
}

/// Entries uniform in `[0.5, 2.5]`.
pub fn positive(seed: u64, rows: usize, cols: usize) -> Matrix {
    uniform(seed, rows, cols, 1.0).mapv(|v| 1.5 + v)
}

/// The synthetic acceptance dataset: SBM(400, 4, 64), p_in 0.1, p_out 0.01,
/// noise 0.5, seed 7.
pub fn sbm_acceptance() -> Graph {
    generate_sbm(&SbmParams {
        num_nodes: 400,
        num_classes: 4,
        dim: 64,
        p_in: 0.1,
        p_out: 0.01,
        feature_noise: 0.5,
        seed: 7,
    })
    .expect("feasible parameters")
}

/// A 40-node, 2-class SBM small enough for many repeated runs.
pub fn tiny_graph() -> Graph {
    generate_sbm(&SbmParams {
        num_nodes: 40,
        num_classes: 2,
        dim: 8,
        p_in: 0.3,
        p_out: 0.05,
        feature_noise: 0.5,
        seed: 3,
    })
    .expect("feasible parameters")
}

/// Short schedule on [`tiny_graph`]: n = 4, d = 4, both groups scheduled.
pub fn tiny_config() -> CondenserConfig {
    CondenserConfig {
        r_n: 0.1,
        r_d: 0.5,
        restarts: 2,
        epochs: 5,
        t1: 2,
        t2: 1,
        inner_steps: 3,
        condenser_hidden: 8,
        link_hidden: 8,
        sgc_hidden: 16,
        ..CondenserConfig::default()
    }
}

/// Deterministic proptest runner, so every run checks the same cases.
pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs a property over `cases` generated values; the error names the
/// minimal failing input.
pub fn property<S, F>(cases: u32, strategy: S, test: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

/// Dense 0/1 adjacency with unit diagonal.
pub fn dense_adjacency(n: usize, edges: &[(usize, usize)]) -> Matrix {
    let mut a = Matrix::eye(n);
    for &(u, v) in edges {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    a
}

/// Matching loss when the condensed graph is an exact per-class copy of a
/// small original graph, computed two ways:
///
/// - through the library's loss with the condensed rows set to the
///   propagated original rows (identity condensed structure), and
/// - with the condensed graph holding the original features and the
///   original adjacency as a dense matrix, normalized on the tape.
///
/// Returns the larger of the two.
pub fn self_match_loss() -> f64 {
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)];
    let labels = [0usize, 0, 1, 1, 0, 1];
    let x = uniform(50, 6, 5, 2.0);
    let w1 = uniform(51, 5, 4, 1.0);
    let w2 = uniform(52, 4, 2, 1.0);
    let p = normalize_edges(6, &edges);
    let batches: Vec<Vec<usize>> = (0..2)
        .map(|c| (0..6).filter(|&i| labels[i] == c).collect())
        .collect();

    let copy = {
        let mut tape = Tape::new();
        let inputs = MatchingInputs {
            propagation: p.csr(),
            hops: 2,
            batches: &batches,
            synthetic: &batches,
        };
        let xt = tape.constant(x.clone());
        let xs = tape.constant(p.propagate(&x, 2));
        let (a, b) = (tape.constant(w1.clone()), tape.constant(w2.clone()));
        let m = matching_loss(&mut tape, &inputs, xt, xs, None, a, b).expect("valid instance");
        tape.scalar(m.total)
    };

    let structural = {
        let mut tape = Tape::new();
        let xt = tape.constant(x.clone());
        let mut zo = xt;
        let prop = Arc::clone(p.csr());
        for _ in 0..2 {
            zo = tape.propagate(&prop, zo).expect("shapes");
        }
        let a = tape.constant(dense_adjacency(6, &edges));
        let pn = normalize_on_tape(&mut tape, a).expect("positive degrees");
        let mut zs = tape.constant(x.clone());
        for _ in 0..2 {
            zs = tape.matmul(pn, zs).expect("shapes");
        }
        let (a1, a2) = (tape.constant(w1.clone()), tape.constant(w2.clone()));
        let mut total = 0.0;
        for (c, batch) in batches.iter().enumerate() {
            let ys = vec![c; batch.len()];
            let bo = tape.gather_rows(zo, batch).expect("rows");
            let bs = tape.gather_rows(zs, batch).expect("rows");
            let (g1o, g2o) = sgc_loss_grads(&mut tape, bo, &ys, a1, a2).expect("grads");
            let (g1s, g2s) = sgc_loss_grads(&mut tape, bs, &ys, a1, a2).expect("grads");
            let m1 = tape.cosine_column_distance_sum(g1o, g1s).expect("shapes");
            let m2 = tape.cosine_column_distance_sum(g2o, g2s).expect("shapes");
            total += tape.scalar(m1) + tape.scalar(m2);
        }
        total
    };
    copy.max(structural)
}
