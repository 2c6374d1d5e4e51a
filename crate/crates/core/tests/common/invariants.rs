//! One check per stated invariant of every module. Each returns `Err` with
//! a diagnostic instead of panicking so the acceptance report can list
//! them; the property tests assert them one by one.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gcondense::baselines::{pca_fit, run_baseline, two_stage_condense, Baseline, Order, PCA_ITERS};
use gcondense::condense::{
    apportion, condense, schedule_group, threshold_adjacency, Condenser, CondenserConfig, Group,
};
use gcondense::eval::{condensed_stats, evaluate, mean_std};
use gcondense::graph_io::{
    centralize_features, class_partition, edge_neighborhoods, generate_sbm, load_condensed,
    load_graph, normalize_dense, normalize_edges, save_condensed, save_graph, CondensedGraph,
    SbmParams,
};
use gcondense::models::{
    build_adjacency, init_link_generator, train_eval_model, Arch, Encoder, EncoderGraph,
    EncoderKind, GraphView, TrainHyper,
};
use gcondense::tensor::{Matrix, Tape, COSINE_EPS};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::gradients::{end_to_end_report, op_reports};
use super::{dense_adjacency, property, self_match_loss, tiny_config, tiny_graph, uniform};

pub type Check = fn() -> Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !bool::from($cond) {
            return Err(format!($($msg)+));
        }
    };
}

/// Every invariant, named by module and property.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        (
            "graph_io: normalized adjacency symmetric with 1/sqrt(di dj) entries",
            normalization,
        ),
        (
            "graph_io: centralize zero row sums and idempotent",
            centralize,
        ),
        ("graph_io: load/save round trip", round_trip),
        (
            "graph_io: class partition is a disjoint cover",
            partition_cover,
        ),
        ("graph_io: SBM generator is pure", sbm_pure),
        (
            "tensor: finite differences on random inputs in [-2,2]",
            finite_differences,
        ),
        ("tensor: masked softmax rows sum to 1", softmax_rows),
        (
            "tensor: cosine distance range and zero iff parallel",
            cosine_range,
        ),
        ("tensor: tape replay is bit-identical", tape_replay),
        ("tensor: no silent NaN or Inf", no_silent_non_finite),
        (
            "models: closed-form backbone gradient equals tape",
            closed_form,
        ),
        (
            "models: adjacency symmetric, unit diagonal, off-diagonal in (0,1)",
            adjacency_shape,
        ),
        (
            "models: attention rows are probability vectors",
            attention_rows,
        ),
        ("models: encoders are deterministic", encoders_deterministic),
        (
            "models: training is bit-reproducible",
            training_reproducible,
        ),
        (
            "condenser: M nonnegative and self-match below 1e-8",
            matching_nonnegative,
        ),
        ("condenser: per-epoch update groups", update_groups),
        (
            "condenser: labels, shapes and history length fixed",
            state_shape,
        ),
        (
            "condenser: condensation is deterministic",
            condense_deterministic,
        ),
        (
            "condenser: threshold idempotent, symmetric, monotone",
            threshold_props,
        ),
        (
            "condenser: apportionment within one seat of quota",
            apportionment,
        ),
        ("condenser: schedule periodicity", schedule_period),
        (
            "baselines: PCA orthonormal with nonincreasing variance",
            pca_props,
        ),
        (
            "baselines: features-first keeps the condenser fixed",
            features_first_fixed,
        ),
        (
            "baselines: baselines are reproducible",
            baselines_reproducible,
        ),
        ("eval: accuracy invariant to test order", test_order),
        ("eval: mean and std recomputable", mean_std_recompute),
        ("eval: edge count nonincreasing in gamma", edges_monotone),
        (
            "eval: identity condensation equals direct training",
            identity_condensation,
        ),
        (
            "cli: identical runs give identical files",
            cli_deterministic,
        ),
        (
            "cli: every writing subcommand writes a manifest",
            cli_manifests,
        ),
        ("cli: --seed overrides the config seed", cli_seed_precedence),
    ]
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..10).prop_flat_map(|n| {
        vec(any::<bool>(), n * (n - 1) / 2).prop_map(move |mask| {
            let pairs = (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v)));
            let edges = pairs
                .zip(mask)
                .filter(|(_, keep)| *keep)
                .map(|(e, _)| e)
                .collect();
            (n, edges)
        })
    })
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

// ---------- graph_io ----------

pub fn normalization() -> Result<(), String> {
    property(64, random_graph(), |(n, edges)| {
        let p = normalize_edges(n, &edges).to_dense();
        let mut deg = vec![1.0f64; n];
        for &(u, v) in &edges {
            deg[u] += 1.0;
            deg[v] += 1.0;
        }
        let a = dense_adjacency(n, &edges);
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(p[[i, j]].to_bits(), p[[j, i]].to_bits());
                let want = if a[[i, j]] != 0.0 {
                    1.0 / (deg[i] * deg[j]).sqrt()
                } else {
                    0.0
                };
                prop_assert!((p[[i, j]] - want).abs() <= 1e-12, "entry ({}, {})", i, j);
            }
        }
        prop_assert_eq!(normalize_dense(&a).to_dense(), p);
        Ok(())
    })
}

pub fn centralize() -> Result<(), String> {
    let strategy = (1usize..6, 1usize..8)
        .prop_flat_map(|(r, c)| vec(-1e3f64..1e3, r * c).prop_map(move |v| (r, c, v)));
    property(64, strategy, |(r, c, v)| {
        let x = Matrix::from_shape_vec((r, c), v).expect("length");
        let once = centralize_features(&x);
        for row in once.rows() {
            prop_assert!(row.sum().abs() <= 1e-9, "row sum {}", row.sum());
        }
        let twice = centralize_features(&once);
        prop_assert!((&twice - &once).iter().all(|e| e.abs() <= 1e-12));
        Ok(())
    })
}

fn sbm_strategy() -> impl Strategy<Value = SbmParams> {
    (
        4usize..30,
        1usize..4,
        0usize..6,
        0.2f64..1.0,
        0.0f64..0.2,
        0.0f64..2.0,
        any::<u64>(),
    )
        .prop_map(|(n, c, extra, p_in, p_out, noise, seed)| SbmParams {
            num_nodes: n.max(2 * c),
            num_classes: c,
            dim: c + extra,
            p_in,
            p_out,
            feature_noise: noise,
            seed,
        })
}

pub fn round_trip() -> Result<(), String> {
    property(24, sbm_strategy(), |params| {
        let g = generate_sbm(&params).map_err(|e| fail(e.to_string()))?;
        let dir = tempfile::tempdir().map_err(|e| fail(e.to_string()))?;
        save_graph(&g, dir.path()).map_err(|e| fail(e.to_string()))?;
        let back = load_graph(dir.path()).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(&back, &g);

        let n = 2 + (params.seed % 4) as usize;
        let x_hat = uniform(params.seed, n, 3, 1e3);
        let psi = init_link_generator(3, 4, params.seed);
        let cg = CondensedGraph {
            a_hat: threshold_adjacency(
                &build_adjacency(&x_hat, &psi).map_err(|e| fail(e.to_string()))?,
                0.3,
            ),
            x_hat,
            y_hat: (0..n).map(|i| i % 2).collect(),
            num_classes: 2,
            gamma: Some(0.3),
        };
        let phi = Encoder::init(EncoderKind::Gat, 5, 3, 4, params.seed)
            .map_err(|e| fail(e.to_string()))?;
        let cdir = dir.path().join("condensed");
        save_condensed(&cg, &phi, &cdir).map_err(|e| fail(e.to_string()))?;
        let (cg2, phi2) = load_condensed(&cdir).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(cg2, cg);
        prop_assert_eq!(phi2, phi);
        Ok(())
    })
}

pub fn partition_cover() -> Result<(), String> {
    let strategy =
        (1usize..5).prop_flat_map(|c| (Just(c), vec(0..c, 0..30), vec(any::<bool>(), 30)));
    property(64, strategy, |(c, labels, pick)| {
        let idx: Vec<usize> = (0..labels.len()).filter(|&i| pick[i]).collect();
        let parts = class_partition(&labels, &idx, c);
        prop_assert_eq!(parts.len(), c);
        let mut seen: Vec<usize> = parts.concat();
        seen.sort_unstable();
        prop_assert_eq!(&seen, &idx);
        for (k, part) in parts.iter().enumerate() {
            prop_assert!(part.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(part.iter().all(|&i| labels[i] == k));
        }
        Ok(())
    })
}

pub fn sbm_pure() -> Result<(), String> {
    property(16, sbm_strategy(), |params| {
        let a = generate_sbm(&params).map_err(|e| fail(e.to_string()))?;
        let b = generate_sbm(&params).map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(a.edges, b.edges);
        prop_assert!(a
            .features
            .iter()
            .zip(b.features.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert_eq!(a.labels, b.labels);
        prop_assert_eq!(
            (a.train_idx, a.val_idx, a.test_idx),
            (b.train_idx, b.val_idx, b.test_idx)
        );
        Ok(())
    })
}

// ---------- tensor ----------

pub fn finite_differences() -> Result<(), String> {
    for seed in 0..4 {
        for (name, report) in op_reports(seed) {
            ensure!(report.passed(), "seed {seed}, {name}: {report:?}");
        }
    }
    let e2e = end_to_end_report();
    ensure!(e2e.passed(), "end-to-end matching loss: {e2e:?}");
    Ok(())
}

pub fn softmax_rows() -> Result<(), String> {
    let strategy = (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        (vec(-50.0f64..50.0, r * c), vec(any::<bool>(), r * c)).prop_map(move |(v, m)| (r, c, v, m))
    });
    property(64, strategy, |(r, c, v, m)| {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_shape_vec((r, c), v).expect("length"));
        let mask = ndarray::Array2::from_shape_vec((r, c), m).expect("length");
        let degenerate = mask.rows().into_iter().any(|row| !row.iter().any(|&b| b));
        let s = match tape.masked_row_softmax(x, Some(&mask)) {
            Err(_) if degenerate => return Ok(()),
            other => other.map_err(|e| fail(e.to_string()))?,
        };
        prop_assert!(!degenerate, "a fully masked row was accepted");
        let s = tape.value(s);
        for i in 0..r {
            let sum: f64 = (0..c).filter(|&j| mask[[i, j]]).map(|j| s[[i, j]]).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12, "row {} sums to {}", i, sum);
            prop_assert!((0..c).filter(|&j| !mask[[i, j]]).all(|j| s[[i, j]] == 0.0));
        }
        Ok(())
    })
}

pub fn cosine_range() -> Result<(), String> {
    let strategy = (1usize..6, 1usize..5, any::<u64>());
    property(64, strategy, |(r, h, seed)| {
        let a = uniform(seed, r, h, 2.0);
        let b = uniform(seed.wrapping_add(1), r, h, 2.0);
        let mut tape = Tape::new();
        let (va, vb) = (tape.constant(a.clone()), tape.constant(b));
        let d = tape
            .cosine_column_distance_sum(va, vb)
            .map_err(|e| fail(e.to_string()))?;
        let d = tape.scalar(d);
        prop_assert!(
            (0.0..=2.0 * h as f64 + 1e-12).contains(&d),
            "distance {}",
            d
        );

        let scales = uniform(seed.wrapping_add(2), 1, h, 1.0).mapv(|s| 0.5 + s.abs());
        let parallel = &a * &scales;
        let vp = tape.constant(parallel);
        let zero = tape
            .cosine_column_distance_sum(va, vp)
            .map_err(|e| fail(e.to_string()))?;
        let guarded = a
            .columns()
            .into_iter()
            .filter(|c| c.dot(c).sqrt() <= COSINE_EPS)
            .count();
        prop_assert!((tape.scalar(zero) - guarded as f64).abs() <= 1e-12);

        let anti = tape.constant(-&a);
        let two = tape
            .cosine_column_distance_sum(va, anti)
            .map_err(|e| fail(e.to_string()))?;
        prop_assert!((tape.scalar(two) - 2.0 * h as f64).abs() <= 1e-12 + guarded as f64);
        Ok(())
    })
}

pub fn tape_replay() -> Result<(), String> {
    let run = || -> Vec<u64> {
        let edges = [(0, 1), (1, 2), (2, 3)];
        let eg = EncoderGraph::from_edges(4, &edges);
        let enc = Encoder::init(EncoderKind::Gat, 3, 2, 4, 5).expect("encoder");
        let mut tape = Tape::new();
        let x = tape.param(uniform(60, 4, 3, 2.0));
        let vars = enc.params().register(&mut tape, true);
        let y = enc
            .encode_on_tape(&mut tape, &eg, x, &vars)
            .expect("encode");
        let loss = super::gradients::weighted_sum(&mut tape, y, 61).expect("sum");
        let mut bits = vec![tape.scalar(loss).to_bits()];
        let mut grads = tape.backward(loss).expect("backward");
        bits.extend(grads.take(x).expect("grad").iter().map(|v| v.to_bits()));
        for (_, g) in vars.grads(&mut grads).0 {
            bits.extend(g.iter().map(|v| v.to_bits()));
        }
        bits
    };
    ensure!(
        run() == run(),
        "replaying the same tape changed output or gradient bits"
    );
    Ok(())
}

pub fn no_silent_non_finite() -> Result<(), String> {
    let strategy = (vec(-800.0f64..800.0, 6), 0usize..6);
    property(128, strategy, |(v, op)| {
        let x = Matrix::from_shape_vec((2, 3), v).expect("length");
        let mut tape = Tape::new();
        let a = tape.constant(x.clone());
        let big = tape.constant(Matrix::from_elem((3, 3), 1e307));
        let out = match op {
            0 => tape.exp(a),
            1 => tape.log(a),
            2 => tape.powf(a, -1.5),
            3 => tape.matmul(a, big),
            4 => tape.row_sum(a).and_then(|s| tape.broadcast_row_div(a, s)),
            _ => tape.cross_entropy(a, &[0, 2], None),
        };
        if let Ok(v) = out {
            prop_assert!(
                tape.value(v).iter().all(|x| x.is_finite()),
                "op {} returned a non-finite value",
                op
            );
        }
        Ok(())
    })
}

// ---------- models ----------

pub fn closed_form() -> Result<(), String> {
    let err = super::gradients::closed_form_max_error(100);
    ensure!(err <= 1e-10, "max abs difference {err:e}");
    Ok(())
}

pub fn adjacency_shape() -> Result<(), String> {
    property(48, (1usize..8, 1usize..5, any::<u64>()), |(n, d, seed)| {
        let x = uniform(seed, n, d, 2.0);
        let psi = init_link_generator(d, 8, seed);
        let a = build_adjacency(&x, &psi).map_err(|e| fail(e.to_string()))?;
        for i in 0..n {
            prop_assert_eq!(a[[i, i]], 1.0);
            for j in 0..n {
                prop_assert_eq!(a[[i, j]].to_bits(), a[[j, i]].to_bits());
                if i != j {
                    prop_assert!(a[[i, j]] > 0.0 && a[[i, j]] < 1.0);
                }
            }
        }
        Ok(())
    })
}

pub fn attention_rows() -> Result<(), String> {
    let strategy = (random_graph(), any::<u64>());
    property(48, strategy, |((n, edges), seed)| {
        let eg = EncoderGraph::from_edges(n, &edges);
        let enc =
            Encoder::init(EncoderKind::Gat, 4, 3, 5, seed).map_err(|e| fail(e.to_string()))?;
        let x = uniform(seed, n, 4, 2.0);
        let pattern = edge_neighborhoods(n, &edges);
        for alpha in enc.attention(&eg, &x).map_err(|e| fail(e.to_string()))? {
            for i in 0..n {
                let (lo, hi) = (pattern.indptr()[i], pattern.indptr()[i + 1]);
                prop_assert_eq!(
                    hi - lo,
                    1 + edges.iter().filter(|&&(u, v)| u == i || v == i).count()
                );
                let row = &alpha[lo..hi];
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                prop_assert!(row.iter().all(|&a| a >= 0.0));
            }
        }
        Ok(())
    })
}

pub fn encoders_deterministic() -> Result<(), String> {
    let edges = [(0, 1), (1, 2), (2, 3), (0, 3)];
    let eg = EncoderGraph::from_edges(4, &edges);
    let x = uniform(70, 4, 5, 2.0);
    for kind in [
        EncoderKind::Gat,
        EncoderKind::Gcn,
        EncoderKind::Mlp,
        EncoderKind::Linear,
    ] {
        let a = Encoder::init(kind, 5, 3, 6, 9).map_err(|e| e.to_string())?;
        let b = Encoder::init(kind, 5, 3, 6, 9).map_err(|e| e.to_string())?;
        ensure!(a == b, "{kind}: initialization differs");
        let (ya, yb) = (
            a.encode(&eg, &x).map_err(|e| e.to_string())?,
            a.encode(&eg, &x).map_err(|e| e.to_string())?,
        );
        ensure!(
            ya.iter()
                .zip(yb.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits()),
            "{kind}: outputs differ"
        );
    }
    Ok(())
}

pub fn training_reproducible() -> Result<(), String> {
    let g = tiny_graph();
    let view =
        GraphView::from_graph(&g, centralize_features(&g.features)).map_err(|e| e.to_string())?;
    for arch in Arch::ALL {
        let hyper = TrainHyper {
            epochs: 40,
            ..TrainHyper::for_arch(arch)
        };
        let run = || {
            train_eval_model(
                &view,
                &g.train_idx,
                &view,
                &g.val_idx,
                &g.test_idx,
                arch,
                &hyper,
                3,
            )
        };
        let (a, b) = (
            run().map_err(|e| e.to_string())?,
            run().map_err(|e| e.to_string())?,
        );
        ensure!(
            a.params == b.params && a.best_epoch == b.best_epoch && a.test_acc == b.test_acc,
            "{arch}: runs differ"
        );
    }
    Ok(())
}

// ---------- condenser ----------

pub fn matching_nonnegative() -> Result<(), String> {
    let g = tiny_graph();
    let c = Condenser::new(&g, &tiny_config()).map_err(|e| e.to_string())?;
    let mut s = c.init_state().map_err(|e| e.to_string())?;
    for t in 0..6 {
        s.t = t;
        let grads = c
            .matching_gradients(&s, schedule_group(t, 2, 1))
            .map_err(|e| e.to_string())?;
        ensure!(
            grads.total >= 0.0 && grads.per_class.iter().all(|&m| m >= 0.0),
            "negative M at t={t}"
        );
        c.apply(&mut s, &grads).map_err(|e| e.to_string())?;
    }
    let m = self_match_loss();
    ensure!(m <= 1e-8, "self-match M = {m:e}");
    Ok(())
}

pub fn update_groups() -> Result<(), String> {
    let g = tiny_graph();
    let cfg = tiny_config();
    let c = Condenser::new(&g, &cfg).map_err(|e| e.to_string())?;
    let mut s = c.init_state().map_err(|e| e.to_string())?;
    for t in 0..6 {
        s.t = t;
        let before = s.clone();
        c.epoch(&mut s).map_err(|e| e.to_string())?;
        let group = schedule_group(t, cfg.t1, cfg.t2);
        ensure!(s.phi != before.phi, "t={t}: condenser not updated");
        ensure!(
            (s.psi != before.psi) == (group == Group::Psi),
            "t={t}: link generator update mismatch for {group:?}"
        );
        ensure!(
            (s.x_hat != before.x_hat) == (group == Group::XHat),
            "t={t}: feature update mismatch for {group:?}"
        );
    }
    Ok(())
}

pub fn state_shape() -> Result<(), String> {
    let g = tiny_graph();
    let c = Condenser::new(&g, &tiny_config()).map_err(|e| e.to_string())?;
    let mut s = c.init_state().map_err(|e| e.to_string())?;
    let (y0, dim0) = (s.y_hat.clone(), s.x_hat().dim());
    ensure!(
        dim0 == c.sizes(),
        "x_hat {dim0:?} vs planned {:?}",
        c.sizes()
    );
    for t in 0..6 {
        s.t = t;
        c.epoch(&mut s).map_err(|e| e.to_string())?;
        ensure!(s.y_hat == y0, "labels changed at t={t}");
        ensure!(s.x_hat().dim() == dim0, "x_hat shape changed at t={t}");
        ensure!(
            s.phi.output_dim() == dim0.1,
            "condenser width changed at t={t}"
        );
        ensure!(
            s.history.records.len() == t + 1,
            "history has {} rows after {} epochs",
            s.history.records.len(),
            t + 1
        );
    }
    let out = c.finish(s).map_err(|e| e.to_string())?;
    ensure!(
        out.condensed.y_hat == y0 && out.condensed.x_hat.dim() == dim0,
        "finished graph changed shape"
    );
    Ok(())
}

pub fn condense_deterministic() -> Result<(), String> {
    let g = tiny_graph();
    let cfg = tiny_config();
    let a = condense(&g, &cfg).map_err(|e| e.to_string())?;
    let b = condense(&g, &cfg).map_err(|e| e.to_string())?;
    ensure!(a.condensed == b.condensed, "condensed graphs differ");
    ensure!(a.phi == b.phi, "condensers differ");
    ensure!(a.history == b.history, "histories differ");
    Ok(())
}

pub fn threshold_props() -> Result<(), String> {
    let strategy = (1usize..8, any::<u64>(), 0.0f64..1.0, 0.0f64..1.0);
    property(64, strategy, |(n, seed, g1, g2)| {
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = build_adjacency(&uniform(seed, n, 3, 2.0), &init_link_generator(3, 6, seed))
            .map_err(|e| fail(e.to_string()))?;
        let t = threshold_adjacency(&a, lo);
        prop_assert_eq!(&threshold_adjacency(&t, lo), &t);
        prop_assert_eq!(&t.t().to_owned(), &t);
        prop_assert!((0..n).all(|i| t[[i, i]] == 1.0));
        let nnz = |m: &Matrix| m.iter().filter(|&&v| v != 0.0).count();
        prop_assert!(nnz(&t) >= nnz(&threshold_adjacency(&a, hi)));
        Ok(())
    })
}

/// `|count_c − n·p_c| ≤ 1` whenever no class is forced up to its one-seat
/// minimum; otherwise counts still sum to `n` with at least one seat per
/// nonempty class.
pub fn apportionment() -> Result<(), String> {
    let strategy = (vec(0usize..40, 1..8), 0usize..60);
    property(256, strategy, |(sizes, n)| {
        let nonempty = sizes.iter().filter(|&&s| s > 0).count();
        let total: usize = sizes.iter().sum();
        let result = apportion(n, &sizes);
        if total == 0 || n < nonempty {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let counts = result.map_err(|e| fail(e.to_string()))?;
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        let quota: Vec<f64> = sizes
            .iter()
            .map(|&s| n as f64 * s as f64 / total as f64)
            .collect();
        for (c, &s) in sizes.iter().enumerate() {
            prop_assert!(s == 0 || counts[c] >= 1);
            prop_assert!(s > 0 || counts[c] == 0);
        }
        if sizes.iter().zip(&quota).all(|(&s, &q)| s == 0 || q >= 1.0) {
            for (c, &q) in quota.iter().enumerate() {
                prop_assert!(
                    (counts[c] as f64 - q).abs() <= 1.0,
                    "class {} gets {} for quota {}",
                    c,
                    counts[c],
                    q
                );
            }
        }
        Ok(())
    })
}

pub fn schedule_period() -> Result<(), String> {
    property(
        256,
        (0usize..10_000, 1usize..40, 1usize..40),
        |(t, t1, t2)| {
            prop_assert_eq!(
                schedule_group(t, t1, t2),
                schedule_group(t + t1 + t2, t1, t2)
            );
            let first = (0..t1 + t2)
                .filter(|&u| schedule_group(u, t1, t2) == Group::Psi)
                .count();
            prop_assert_eq!(first, t1);
            Ok(())
        },
    )
}

// ---------- baselines ----------

pub fn pca_props() -> Result<(), String> {
    let strategy = (1usize..12, 1usize..8, any::<u64>())
        .prop_flat_map(|(n, dim, seed)| (Just(n), Just(dim), 1..=dim, Just(seed)));
    property(48, strategy, |(n, dim, d, seed)| {
        let x = uniform(seed, n, dim, 2.0);
        let m = pca_fit(&x, d, PCA_ITERS, seed).map_err(|e| fail(e.to_string()))?;
        let gram = m.components.dot(&m.components.t());
        let err = (&gram - &Matrix::eye(d))
            .iter()
            .fold(0.0f64, |a, e| a.max(e.abs()));
        prop_assert!(err <= 1e-8, "gram error {}", err);
        prop_assert!(m.explained_variance.windows(2).all(|w| w[0] >= w[1]));
        Ok(())
    })
}

pub fn features_first_fixed() -> Result<(), String> {
    let g = tiny_graph();
    let (out, model) =
        two_stage_condense(&g, &tiny_config(), Order::FeaturesFirst).map_err(|e| e.to_string())?;
    ensure!(
        out.phi == model.encoder().map_err(|e| e.to_string())?,
        "condenser moved during the run"
    );
    Ok(())
}

pub fn baselines_reproducible() -> Result<(), String> {
    let g = tiny_graph();
    let cfg = tiny_config();
    for which in [Baseline::NodeOnly, Baseline::PcaFirst, Baseline::PcaAfter] {
        let a = run_baseline(&g, &cfg, which).map_err(|e| e.to_string())?;
        let b = run_baseline(&g, &cfg, which).map_err(|e| e.to_string())?;
        ensure!(
            a.condensed == b.condensed && a.phi == b.phi && a.history == b.history,
            "{which}: runs differ"
        );
    }
    Ok(())
}

// ---------- eval ----------

fn quick(arch: Arch) -> TrainHyper {
    TrainHyper {
        epochs: 60,
        ..TrainHyper::for_arch(arch)
    }
}

pub fn test_order() -> Result<(), String> {
    let g = tiny_graph();
    let out = condense(&g, &tiny_config()).map_err(|e| e.to_string())?;
    let mut shuffled = g.clone();
    shuffled.test_idx.reverse();
    shuffled.test_idx.rotate_left(3);
    for arch in [Arch::Gcn, Arch::Mlp] {
        let a = evaluate(&out.condensed, &out.phi, &g, arch, &[0, 1], &quick(arch))
            .map_err(|e| e.to_string())?;
        let b = evaluate(
            &out.condensed,
            &out.phi,
            &shuffled,
            arch,
            &[0, 1],
            &quick(arch),
        )
        .map_err(|e| e.to_string())?;
        ensure!(a.accs == b.accs, "{arch}: {:?} vs {:?}", a.accs, b.accs);
    }
    Ok(())
}

pub fn mean_std_recompute() -> Result<(), String> {
    property(128, vec(0.0f64..1.0, 1..12), |accs| {
        let (m, s) = mean_std(&accs);
        let n = accs.len() as f64;
        let mean = accs.iter().sum::<f64>() / n;
        let var = if accs.len() > 1 {
            accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        prop_assert!((m - mean).abs() <= 1e-12 && (s - var.sqrt()).abs() <= 1e-12);
        Ok(())
    })
}

pub fn edges_monotone() -> Result<(), String> {
    property(32, (2usize..10, any::<u64>()), |(n, seed)| {
        let x = uniform(seed, n, 3, 2.0);
        let a = build_adjacency(&x, &init_link_generator(3, 6, seed))
            .map_err(|e| fail(e.to_string()))?;
        let mut last = usize::MAX;
        for k in 0..=20 {
            let gamma = k as f64 / 20.0 * 0.999;
            let cg = CondensedGraph {
                x_hat: x.clone(),
                a_hat: threshold_adjacency(&a, gamma),
                y_hat: vec![0; n],
                num_classes: 1,
                gamma: Some(gamma),
            };
            let e = condensed_stats(&cg, None).edges;
            prop_assert!(e <= last, "edges rose to {} at gamma {}", e, gamma);
            last = e;
        }
        Ok(())
    })
}

/// Condensing to the whole graph (every node, every feature, identity
/// condenser, original adjacency) and evaluating must give exactly the
/// accuracies of training directly on the original graph with all nodes
/// as training nodes.
pub fn identity_condensation() -> Result<(), String> {
    let g = tiny_graph();
    let x = centralize_features(&g.features);
    let cg = CondensedGraph {
        x_hat: x.clone(),
        a_hat: dense_adjacency(g.num_nodes, &g.edges),
        y_hat: g.labels.clone(),
        num_classes: g.num_classes,
        gamma: None,
    };
    let phi = Encoder::identity(g.num_features);
    let view = GraphView::from_graph(&g, x).map_err(|e| e.to_string())?;
    let all: Vec<usize> = (0..g.num_nodes).collect();
    let seeds = [0u64, 1];
    for arch in Arch::ALL {
        let hyper = quick(arch);
        let via = evaluate(&cg, &phi, &g, arch, &seeds, &hyper).map_err(|e| e.to_string())?;
        let direct: Vec<f64> = seeds
            .iter()
            .map(|&s| {
                train_eval_model(&view, &all, &view, &g.val_idx, &g.test_idx, arch, &hyper, s)
                    .map(|o| o.test_acc)
            })
            .collect::<gcondense::Result<_>>()
            .map_err(|e| e.to_string())?;
        ensure!(via.accs == direct, "{arch}: {:?} vs {:?}", via.accs, direct);
    }
    Ok(())
}

// ---------- cli ----------

fn cli(args: &[&str]) -> i32 {
    gcondense::cli::run(std::iter::once("gcondense").chain(args.iter().copied()))
}

fn write_tiny_config(path: &Path, seed: Option<u64>) -> Result<(), String> {
    let mut cfg: CondenserConfig = tiny_config();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    fs::write(
        path,
        serde_json::to_string(&cfg).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())
}

fn synth(dir: &Path) -> Result<(), String> {
    let code = cli(&[
        "synth",
        "--nodes",
        "40",
        "--classes",
        "2",
        "--dim",
        "8",
        "--p-in",
        "0.3",
        "--p-out",
        "0.05",
        "--noise",
        "0.5",
        "--seed",
        "3",
        "--out",
        &dir.display().to_string(),
    ]);
    ensure!(code == 0, "synth exited {code}");
    Ok(())
}

/// Every file of a directory; manifests are parsed with timestamps removed.
fn snapshot(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path
            .file_name()
            .expect("file")
            .to_string_lossy()
            .into_owned();
        let mut bytes = fs::read(&path).map_err(|e| e.to_string())?;
        if name.ends_with("manifest.json") {
            let mut v: serde_json::Value =
                serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
            let obj = v.as_object_mut().ok_or("manifest is not an object")?;
            obj.remove("started_at");
            obj.remove("finished_at");
            bytes = serde_json::to_vec(&v).map_err(|e| e.to_string())?;
        }
        out.insert(name, bytes);
    }
    Ok(out)
}

pub fn cli_deterministic() -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    synth(&data)?;
    let config = tmp.path().join("config.json");
    write_tiny_config(&config, None)?;
    let out = tmp.path().join("out");
    let args = [
        "condense",
        "--data",
        &data.display().to_string(),
        "--config",
        &config.display().to_string(),
        "--out",
        &out.display().to_string(),
    ];
    ensure!(cli(&args) == 0, "first condense failed");
    let first = snapshot(&out)?;
    fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
    ensure!(cli(&args) == 0, "second condense failed");
    let second = snapshot(&out)?;
    ensure!(first.keys().eq(second.keys()), "file sets differ");
    for (name, bytes) in &first {
        ensure!(second[name] == *bytes, "{name} differs between runs");
    }
    Ok(())
}

pub fn cli_manifests() -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).display().to_string();
    synth(&tmp.path().join("data"))?;
    write_tiny_config(&tmp.path().join("c.json"), None)?;
    let runs: Vec<(Vec<String>, String)> = vec![
        (
            vec![
                "condense".into(),
                "--data".into(),
                p("data"),
                "--config".into(),
                p("c.json"),
                "--out".into(),
                p("joint"),
            ],
            p("joint/manifest.json"),
        ),
        (
            vec![
                "baseline".into(),
                "--method".into(),
                "pca-first".into(),
                "--data".into(),
                p("data"),
                "--config".into(),
                p("c.json"),
                "--out".into(),
                p("pca"),
            ],
            p("pca/manifest.json"),
        ),
        (
            vec![
                "evaluate".into(),
                "--data".into(),
                p("data"),
                "--condensed".into(),
                p("joint"),
                "--runs".into(),
                "2".into(),
                "--epochs".into(),
                "20".into(),
                "--out".into(),
                p("report.json"),
            ],
            p("report.manifest.json"),
        ),
        (
            vec![
                "stats".into(),
                "--condensed".into(),
                p("joint"),
                "--out".into(),
                p("stats.json"),
            ],
            p("stats.manifest.json"),
        ),
    ];
    ensure!(
        Path::new(&p("data/manifest.json")).exists(),
        "synth wrote no manifest"
    );
    for (args, manifest) in runs {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let code = cli(&refs);
        ensure!(code == 0, "{} exited {code}", args[0]);
        let text = fs::read_to_string(&manifest).map_err(|e| format!("{}: {e}", args[0]))?;
        let m: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        ensure!(
            m["command"] == args[0].as_str(),
            "{}: manifest names {}",
            args[0],
            m["command"]
        );
    }
    Ok(())
}

pub fn cli_seed_precedence() -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| tmp.path().join(s).display().to_string();
    synth(&tmp.path().join("data"))?;
    write_tiny_config(&tmp.path().join("c5.json"), Some(5))?;
    write_tiny_config(&tmp.path().join("c9.json"), Some(9))?;
    ensure!(
        cli(&[
            "condense",
            "--data",
            &p("data"),
            "--config",
            &p("c5.json"),
            "--seed",
            "9",
            "--out",
            &p("flag")
        ]) == 0,
        "override run failed"
    );
    ensure!(
        cli(&[
            "condense",
            "--data",
            &p("data"),
            "--config",
            &p("c9.json"),
            "--out",
            &p("file")
        ]) == 0,
        "file-seed run failed"
    );
    let m: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(p("flag/manifest.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        m["seed"] == 9 && m["config"]["seed"] == 9,
        "manifest records seed {}",
        m["seed"]
    );
    for f in [
        "features.csv",
        "adjacency.csv",
        "labels.txt",
        "params.json",
        "loss_history.csv",
    ] {
        let a = fs::read(tmp.path().join("flag").join(f)).map_err(|e| e.to_string())?;
        let b = fs::read(tmp.path().join("file").join(f)).map_err(|e| e.to_string())?;
        ensure!(a == b, "{f}: --seed 9 differs from a config with seed 9");
    }
    Ok(())
}
