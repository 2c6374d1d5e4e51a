use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_io::{
    dense_neighborhoods, edge_neighborhoods, normalize_dense, normalize_edges, CondensedGraph,
    Graph, NormalizedAdjacency,
};
use crate::tensor::optim::Adam;
use crate::tensor::{CsrMatrix, Matrix, Tape, Var};

use super::encoder::GAT_SLOPE;
use super::{glorot_uniform, ParamSet, ParamVars, Role};

/// Evaluation architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Sgc,
    Gcn,
    Mlp,
    Gat,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Sgc, Arch::Gcn, Arch::Mlp, Arch::Gat];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Sgc => "sgc",
            Arch::Gcn => "gcn",
            Arch::Mlp => "mlp",
            Arch::Gat => "gat",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture {s:?}")))
    }
}

/// Full-batch training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    /// Propagation power of the SGC architecture.
    pub hops: usize,
}

impl TrainHyper {
    /// Defaults: 600 epochs (3000 for GAT), lr 0.01, weight decay 5e-4,
    /// hidden 256 (64 for the single-head GAT).
    pub fn for_arch(arch: Arch) -> Self {
        let (epochs, hidden) = match arch {
            Arch::Gat => (3000, 64),
            _ => (600, 256),
        };
        TrainHyper {
            epochs,
            lr: 0.01,
            weight_decay: 5e-4,
            hidden,
            hops: 2,
        }
    }
}

/// Features, structure and labels a model trains or predicts on.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub features: Arc<Matrix>,
    pub adjacency: NormalizedAdjacency,
    pub neighborhoods: Arc<CsrMatrix>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl GraphView {
    /// The original graph's structure with caller-supplied features
    /// (typically the encoded features).
    pub fn from_graph(graph: &Graph, features: Matrix) -> Result<Self> {
        if features.nrows() != graph.num_nodes {
            return Err(Error::Shape {
                op: "graph_view",
                lhs: features.dim(),
                rhs: (graph.num_nodes, graph.num_nodes),
            });
        }
        Ok(GraphView {
            features: Arc::new(features),
            adjacency: normalize_edges(graph.num_nodes, &graph.edges),
            neighborhoods: edge_neighborhoods(graph.num_nodes, &graph.edges),
            labels: graph.labels.clone(),
            num_classes: graph.num_classes,
        })
    }

    pub fn from_condensed(cg: &CondensedGraph) -> Self {
        GraphView {
            features: Arc::new(cg.x_hat.clone()),
            adjacency: normalize_dense(&cg.a_hat),
            neighborhoods: dense_neighborhoods(&cg.a_hat),
            labels: cg.y_hat.clone(),
            num_classes: cg.num_classes,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights at the selected epoch.
    pub params: ParamSet,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_acc: f64,
}

fn init_params(arch: Arch, hyper: &TrainHyper, d: usize, c: usize, seed: u64) -> ParamSet {
    let h = hyper.hidden;
    let mut p = ParamSet::new(Role::Eval);
    let mut add = |name: &str, r, cols, zero: bool| {
        let m = if zero {
            Matrix::zeros((r, cols))
        } else {
            glorot_uniform(seed, &format!("eval/{name}"), r, cols)
        };
        p.insert(name, m).expect("unique names");
    };
    match arch {
        Arch::Sgc => {
            add("w1", d, h, false);
            add("w2", h, c, false);
        }
        Arch::Gcn | Arch::Mlp => {
            add("w1", d, h, false);
            add("b1", 1, h, true);
            add("w2", h, c, false);
            add("b2", 1, c, true);
        }
        Arch::Gat => {
            add("w1", d, h, false);
            add("a_src1", h, 1, false);
            add("a_dst1", h, 1, false);
            add("b1", 1, h, true);
            add("w2", h, c, false);
            add("a_src2", c, 1, false);
            add("a_dst2", c, 1, false);
            add("b2", 1, c, true);
        }
    }
    p
}

/// Per-view input prepared once: SGC consumes `P̃^k X` directly.
fn prepare(view: &GraphView, arch: Arch, hyper: &TrainHyper) -> Arc<Matrix> {
    match arch {
        Arch::Sgc => Arc::new(view.adjacency.propagate(&view.features, hyper.hops)),
        _ => Arc::clone(&view.features),
    }
}

fn forward(
    tape: &mut Tape,
    arch: Arch,
    view: &GraphView,
    input: &Arc<Matrix>,
    p: &ParamVars,
) -> Result<Var> {
    let n = input.nrows();
    let x = tape.constant_shared(Arc::clone(input));
    let ones = tape.constant(Matrix::ones((n, 1)));
    let bias = |tape: &mut Tape, h: Var, name: &str| -> Result<Var> {
        let b = tape.matmul(ones, p.get(name)?)?;
        tape.add(h, b)
    };
    match arch {
        Arch::Sgc => {
            let h = tape.matmul(x, p.get("w1")?)?;
            tape.matmul(h, p.get("w2")?)
        }
        Arch::Mlp => {
            let h = tape.matmul(x, p.get("w1")?)?;
            let h = bias(tape, h, "b1")?;
            let h = tape.relu(h)?;
            let h = tape.matmul(h, p.get("w2")?)?;
            bias(tape, h, "b2")
        }
        Arch::Gcn => {
            let prop = view.adjacency.csr();
            let h = tape.matmul(x, p.get("w1")?)?;
            let h = tape.propagate(prop, h)?;
            let h = bias(tape, h, "b1")?;
            let h = tape.relu(h)?;
            let h = tape.matmul(h, p.get("w2")?)?;
            let h = tape.propagate(prop, h)?;
            bias(tape, h, "b2")
        }
        Arch::Gat => {
            let mut h = x;
            for layer in ["1", "2"] {
                let hw = tape.matmul(h, p.get(&format!("w{layer}"))?)?;
                let src = tape.matmul(hw, p.get(&format!("a_src{layer}"))?)?;
                let dst = tape.matmul(hw, p.get(&format!("a_dst{layer}"))?)?;
                let out = tape.neighbor_attention(&view.neighborhoods, src, dst, hw, GAT_SLOPE)?;
                h = bias(tape, out, &format!("b{layer}"))?;
                if layer == "1" {
                    h = tape.relu(h)?;
                }
            }
            Ok(h)
        }
    }
}

fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    logits
        .outer_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc },
                )
                .0
        })
        .collect()
}

/// Fraction of `idx` whose prediction equals its label; 0 for empty `idx`.
pub fn accuracy(pred: &[usize], labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let hits = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
    hits as f64 / idx.len() as f64
}

/// Trains `arch` full-batch on `train` (loss over `train_idx`) with Adam and
/// L2 weight decay, scoring `eval` every epoch. Keeps the epoch with the
/// strictly best validation accuracy; with an empty `val_idx` the last epoch
/// is kept. Deterministic for a fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn train_eval_model(
    train: &GraphView,
    train_idx: &[usize],
    eval: &GraphView,
    val_idx: &[usize],
    test_idx: &[usize],
    arch: Arch,
    hyper: &TrainHyper,
    seed: u64,
) -> Result<TrainOutcome> {
    let d = train.features.ncols();
    if eval.features.ncols() != d {
        return Err(Error::Shape {
            op: "train_eval_model",
            lhs: train.features.dim(),
            rhs: eval.features.dim(),
        });
    }
    if train_idx.is_empty() {
        return Err(Error::Domain {
            op: "train_eval_model",
            msg: "no training nodes".into(),
        });
    }
    let c = train.num_classes.max(eval.num_classes);
    let train_in = prepare(train, arch, hyper);
    let eval_in = prepare(eval, arch, hyper);
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| train.labels[i]).collect();

    let mut params = init_params(arch, hyper, d, c, seed);
    let mut opt = Adam::new(hyper.lr).with_weight_decay(hyper.weight_decay);
    let mut best: Option<TrainOutcome> = None;

    for epoch in 0..hyper.epochs {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape, true);
        let logits = forward(&mut tape, arch, train, &train_in, &vars)?;
        let batch = tape.gather_rows(logits, train_idx)?;
        let loss = tape.cross_entropy(batch, &train_labels, None)?;
        let mut grads = tape.backward(loss)?;
        opt.step(&mut params, &vars.grads(&mut grads))?;

        let pred = predict_prepared(arch, eval, &eval_in, &params)?;
        let val_acc = accuracy(&pred, &eval.labels, val_idx);
        let improved = match &best {
            None => true,
            Some(b) => val_idx.is_empty() || val_acc > b.val_acc,
        };
        if improved {
            best = Some(TrainOutcome {
                params: params.clone(),
                best_epoch: epoch,
                val_acc,
                test_acc: accuracy(&pred, &eval.labels, test_idx),
            });
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            let pred = predict_prepared(arch, eval, &eval_in, &params)?;
            Ok(TrainOutcome {
                val_acc: accuracy(&pred, &eval.labels, val_idx),
                test_acc: accuracy(&pred, &eval.labels, test_idx),
                params,
                best_epoch: 0,
            })
        }
    }
}

fn predict_prepared(
    arch: Arch,
    view: &GraphView,
    input: &Arc<Matrix>,
    params: &ParamSet,
) -> Result<Vec<usize>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let logits = forward(&mut tape, arch, view, input, &vars)?;
    Ok(argmax_rows(tape.value(logits)))
}
