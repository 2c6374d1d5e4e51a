//! The curriculum gradient-matching loop that learns a condensed graph.
//!
//! Every epoch encodes the original features with the feature condenser,
//! builds the condensed adjacency from the condensed features, and matches
//! per-class backbone gradients on both graphs. The condenser is updated
//! every epoch; the link generator and the condensed features take turns
//! on a `t1`/`t2` schedule. Between epochs the backbone trains on the
//! condensed graph, and it is re-initialized at every restart.

mod config;
mod matching;

pub use config::{CondenserConfig, MatchingMode, OptimizerKind, StructureMode};
pub use matching::{matching_loss, MatchingInputs, MatchingLoss};

use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_io::{
    centralize_features, class_partition, normalize_dense, normalize_edges, CondensedGraph, Graph,
    Setting,
};
use crate::models::{
    build_adjacency, sgc_loss_and_grads, Encoder, EncoderGraph, ParamSet, Role, SgcBackbone,
};
use crate::rng;
use crate::tensor::optim::{Adam, Optimizer, Sgd};
use crate::tensor::{CsrMatrix, Matrix, Tape};

/// Which group besides the condenser receives an update in an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Psi,
    XHat,
}

/// Link generator when `t mod (t1 + t2) < t1`, condensed features otherwise.
pub fn schedule_group(t: usize, t1: usize, t2: usize) -> Group {
    if t % (t1 + t2) < t1 {
        Group::Psi
    } else {
        Group::XHat
    }
}

/// Zeroes off-diagonal entries `≤ gamma`; everything else is kept verbatim.
pub fn threshold_adjacency(a: &Matrix, gamma: f64) -> Matrix {
    let mut out = a.clone();
    for ((i, j), v) in out.indexed_iter_mut() {
        if i != j && *v <= gamma {
            *v = 0.0;
        }
    }
    out
}

/// Largest-remainder apportionment of `n` seats over classes weighted by
/// `sizes`, ties to the lower class index. Every class with a positive size
/// gets at least one seat, taken from the class furthest above its quota.
pub fn apportion(n: usize, sizes: &[usize]) -> Result<Vec<usize>> {
    let total: usize = sizes.iter().sum();
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if total == 0 || n < nonempty {
        return Err(Error::Config(format!(
            "{n} condensed nodes cannot cover {nonempty} classes"
        )));
    }
    let quota: Vec<f64> = sizes
        .iter()
        .map(|&s| n as f64 * s as f64 / total as f64)
        .collect();
    let mut counts: Vec<usize> = quota.iter().map(|q| q.floor() as usize).collect();
    let left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quota[a] - quota[a].floor(), quota[b] - quota[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &c in order.iter().take(left) {
        counts[c] += 1;
    }
    for c in 0..sizes.len() {
        if sizes[c] > 0 && counts[c] == 0 {
            let donor = (0..sizes.len())
                .filter(|&j| counts[j] > 1)
                .max_by(|&a, &b| {
                    let (sa, sb) = (counts[a] as f64 - quota[a], counts[b] as f64 - quota[b]);
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .expect("n >= number of nonempty classes");
            counts[donor] -= 1;
            counts[c] = 1;
        }
    }
    Ok(counts)
}

/// One row of the loss history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub k: usize,
    pub t: usize,
    pub total: f64,
    pub per_class: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub num_classes: usize,
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    /// `k,t,M_total,M_0,…` with one row per matched epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,t,M_total");
        for c in 0..self.num_classes {
            write!(s, ",M_{c}").expect("string write");
        }
        s.push('\n');
        for r in &self.records {
            write!(s, "{},{},{:?}", r.k, r.t, r.total).expect("string write");
            for v in &r.per_class {
                write!(s, ",{v:?}").expect("string write");
            }
            s.push('\n');
        }
        s
    }

    pub fn totals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.total).collect()
    }
}

#[derive(Debug, Clone)]
pub struct CondenseOutput {
    pub condensed: CondensedGraph,
    pub phi: Encoder,
    pub history: LossHistory,
}

/// Condensed sizes `(n, d)` for `graph`. Transductive runs count all nodes,
/// inductive runs only the training nodes.
pub fn condensed_sizes(graph: &Graph, config: &CondenserConfig) -> (usize, usize) {
    let pool = match graph.setting {
        Setting::Transductive => graph.num_nodes,
        Setting::Inductive => graph.train_idx.len(),
    };
    let n = (config.r_n * pool as f64).round() as usize;
    let d = ((config.r_d * graph.num_features as f64).round() as usize).max(1);
    (n, d)
}

/// The graph that is condensed: the whole graph, or the subgraph induced
/// by the training nodes in the inductive setting.
pub fn condensation_graph(graph: &Graph) -> Graph {
    match graph.setting {
        Setting::Transductive => graph.clone(),
        Setting::Inductive => graph.induced_subgraph(&graph.train_idx),
    }
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct MatchingState {
    pub theta: ParamSet,
    pub phi: Encoder,
    pub psi: ParamSet,
    /// Condensed features as the single entry `x_hat`.
    pub x_hat: ParamSet,
    pub y_hat: Vec<usize>,
    pub k: usize,
    pub t: usize,
    pub history: LossHistory,
    opt_phi: Optimizer,
    opt_psi: Optimizer,
    opt_x: Optimizer,
}

impl MatchingState {
    pub fn x_hat(&self) -> &Matrix {
        self.x_hat.get("x_hat").expect("state always holds x_hat")
    }
}

/// Loss and gradients of one matched epoch. A group that was not scheduled
/// has no gradients.
#[derive(Debug, Clone)]
pub struct EpochGradients {
    pub total: f64,
    pub per_class: Vec<f64>,
    pub phi: Option<crate::models::ParamGrads>,
    pub psi: Option<crate::models::ParamGrads>,
    pub x_hat: Option<crate::models::ParamGrads>,
}

/// A prepared run: the condensation graph and everything derived from it
/// that stays fixed across epochs.
#[derive(Debug)]
pub struct Condenser {
    pub config: CondenserConfig,
    pub graph: Graph,
    features: Arc<Matrix>,
    encoder_graph: EncoderGraph,
    propagation: Arc<CsrMatrix>,
    pools: Vec<Vec<usize>>,
    backbone: SgcBackbone,
    sizes: (usize, usize),
}

impl Condenser {
    pub fn new(graph: &Graph, config: &CondenserConfig) -> Result<Self> {
        config.validate()?;
        graph.validate()?;
        let g = condensation_graph(graph);
        let features = Arc::new(centralize_features(&g.features));
        let encoder_graph = EncoderGraph::from_edges(g.num_nodes, &g.edges);
        let propagation = Arc::clone(normalize_edges(g.num_nodes, &g.edges).csr());
        let pools = class_partition(&g.labels, &g.train_idx, g.num_classes);
        Ok(Condenser {
            sizes: condensed_sizes(graph, config),
            config: config.clone(),
            features,
            encoder_graph,
            propagation,
            pools,
            backbone: SgcBackbone {
                hops: config.sgc_hops,
                hidden: config.sgc_hidden,
            },
            graph: g,
        })
    }

    /// Centralized features of the condensation graph.
    pub fn features(&self) -> &Arc<Matrix> {
        &self.features
    }

    pub fn encoder_graph(&self) -> &EncoderGraph {
        &self.encoder_graph
    }

    /// Per-class training pools of the condensation graph.
    pub fn pools(&self) -> &[Vec<usize>] {
        &self.pools
    }

    fn optimizer(&self, lr: f64) -> Optimizer {
        match self.config.optimizer {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr)),
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd::new(lr)),
        }
    }

    fn theta(&self, k: usize, d: usize) -> ParamSet {
        let seed = rng::derive_seed(self.config.seed, &format!("theta/{k}"));
        self.backbone.init(seed, d, self.graph.num_classes)
    }

    /// Initial state with a freshly initialized condenser of the configured
    /// variant.
    pub fn init_state(&self) -> Result<MatchingState> {
        let (_, d) = self.sizes;
        let phi = Encoder::init(
            self.config.condenser_variant,
            self.graph.num_features,
            d,
            self.config.condenser_hidden,
            rng::derive_seed(self.config.seed, "phi"),
        )?;
        self.init_state_with(phi)
    }

    /// Planned `(n, d)`; fixed encoders override `d`.
    pub fn sizes(&self) -> (usize, usize) {
        self.sizes
    }

    /// Initial state around a given condenser. `X̂₀` rows are encoded
    /// training nodes sampled per class without replacement (with
    /// replacement once a class pool runs out); `Ŷ` is sorted by class.
    pub fn init_state_with(&self, phi: Encoder) -> Result<MatchingState> {
        let cfg = &self.config;
        if phi.input_dim() != self.graph.num_features {
            return Err(Error::Shape {
                op: "init_condensed",
                lhs: (self.graph.num_nodes, self.graph.num_features),
                rhs: (phi.input_dim(), phi.output_dim()),
            });
        }
        let (n, _) = self.sizes;
        let sizes: Vec<usize> = self.pools.iter().map(Vec::len).collect();
        let counts = apportion(n, &sizes)?;
        let encoded = phi.encode(&self.encoder_graph, &self.features)?;
        let d = phi.output_dim();

        let mut rows = Vec::with_capacity(n);
        let mut y_hat = Vec::with_capacity(n);
        for (c, (&count, pool)) in counts.iter().zip(&self.pools).enumerate() {
            let mut r = rng::stream(cfg.seed, &format!("init/x_hat/{c}"));
            let mut shuffled = pool.clone();
            shuffled.shuffle(&mut r);
            let mut picks: Vec<usize> = shuffled.iter().copied().take(count).collect();
            while picks.len() < count {
                picks.push(
                    *pool
                        .choose(&mut r)
                        .expect("apportion gives seats only to nonempty pools"),
                );
            }
            rows.extend(picks);
            y_hat.extend(std::iter::repeat_n(c, count));
        }
        let x_hat = encoded.select(ndarray::Axis(0), &rows);
        debug_assert_eq!(x_hat.dim(), (n, d));

        let mut xs = ParamSet::new(Role::Features);
        xs.insert("x_hat", x_hat)?;
        let psi = crate::models::init_link_generator(
            d,
            cfg.link_hidden,
            rng::derive_seed(cfg.seed, "psi"),
        );
        Ok(MatchingState {
            theta: self.theta(0, d),
            phi,
            psi,
            x_hat: xs,
            y_hat,
            k: 0,
            t: 0,
            history: LossHistory {
                num_classes: self.graph.num_classes,
                records: Vec::new(),
            },
            opt_phi: self.optimizer(cfg.eta1),
            opt_psi: self.optimizer(cfg.eta2),
            opt_x: self.optimizer(cfg.eta3),
        })
    }

    fn batches(&self, k: usize, t: usize) -> Vec<Vec<usize>> {
        let size = self.config.batch_size;
        self.pools
            .iter()
            .enumerate()
            .map(|(c, pool)| {
                if size < 0 || size as usize >= pool.len() {
                    return pool.clone();
                }
                let mut r = rng::stream(self.config.seed, &format!("batch/{k}/{t}/{c}"));
                let mut b: Vec<usize> = pool
                    .choose_multiple(&mut r, size as usize)
                    .copied()
                    .collect();
                b.sort_unstable();
                b
            })
            .collect()
    }

    fn synthetic_index(&self, y_hat: &[usize]) -> Vec<Vec<usize>> {
        class_partition(
            y_hat,
            &(0..y_hat.len()).collect::<Vec<_>>(),
            self.graph.num_classes,
        )
    }

    /// Matching loss at the current state and gradients for the condenser
    /// (if trainable) and for `group` only.
    pub fn matching_gradients(
        &self,
        state: &MatchingState,
        group: Group,
    ) -> Result<EpochGradients> {
        let learned = self.config.structure_mode == StructureMode::Learned;
        let batches = self.batches(state.k, state.t);
        let synthetic = self.synthetic_index(&state.y_hat);
        let inputs = MatchingInputs {
            propagation: &self.propagation,
            hops: self.backbone.hops,
            batches: &batches,
            synthetic: &synthetic,
        };

        let mut tape = Tape::new();
        let x = tape.constant_shared(Arc::clone(&self.features));
        let phi_vars = state
            .phi
            .params()
            .register(&mut tape, state.phi.is_trainable());
        let x_tilde = state
            .phi
            .encode_on_tape(&mut tape, &self.encoder_graph, x, &phi_vars)?;
        let x_vars = state.x_hat.register(&mut tape, group == Group::XHat);
        let psi_vars = state
            .psi
            .register(&mut tape, learned && group == Group::Psi);
        let theta = state.theta.register(&mut tape, false);
        let loss = matching_loss(
            &mut tape,
            &inputs,
            x_tilde,
            x_vars.get("x_hat")?,
            learned.then_some(&psi_vars),
            theta.get("w1")?,
            theta.get("w2")?,
        )?;
        let total = tape.scalar(loss.total);
        let mut grads = tape.backward(loss.total)?;
        Ok(EpochGradients {
            total,
            per_class: loss.per_class,
            phi: state.phi.is_trainable().then(|| phi_vars.grads(&mut grads)),
            psi: (learned && group == Group::Psi).then(|| psi_vars.grads(&mut grads)),
            x_hat: (group == Group::XHat).then(|| x_vars.grads(&mut grads)),
        })
    }

    /// Condenser first, then the scheduled group.
    pub fn apply(&self, state: &mut MatchingState, grads: &EpochGradients) -> Result<()> {
        if let Some(g) = &grads.phi {
            state.opt_phi.step(state.phi.params_mut(), g)?;
        }
        if let Some(g) = &grads.psi {
            state.opt_psi.step(&mut state.psi, g)?;
        }
        if let Some(g) = &grads.x_hat {
            state.opt_x.step(&mut state.x_hat, g)?;
        }
        Ok(())
    }

    /// Current (unthresholded) condensed adjacency.
    pub fn adjacency(&self, state: &MatchingState) -> Result<Matrix> {
        match self.config.structure_mode {
            StructureMode::Learned => build_adjacency(state.x_hat(), &state.psi),
            StructureMode::Identity => Ok(Matrix::eye(state.y_hat.len())),
        }
    }

    /// Mean cross-entropy of the backbone on the condensed graph.
    pub fn condensed_loss(&self, state: &MatchingState) -> Result<f64> {
        let z = self.condensed_propagated(state)?;
        let (loss, _, _) = sgc_loss_and_grads(
            &z,
            &state.y_hat,
            state.theta.expect("w1")?,
            state.theta.expect("w2")?,
        )?;
        Ok(loss)
    }

    fn condensed_propagated(&self, state: &MatchingState) -> Result<Matrix> {
        let a = self.adjacency(state)?;
        Ok(normalize_dense(&a).propagate(state.x_hat(), self.backbone.hops))
    }

    /// `steps` plain gradient steps of the backbone on the condensed graph.
    pub fn inner_theta_train(&self, state: &mut MatchingState, steps: usize) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        let z = self.condensed_propagated(state)?;
        let lr = self.config.eta;
        for _ in 0..steps {
            let (_, g1, g2) = sgc_loss_and_grads(
                &z,
                &state.y_hat,
                state.theta.expect("w1")?,
                state.theta.expect("w2")?,
            )?;
            for (name, g) in [("w1", g1), ("w2", g2)] {
                let w = state.theta.get_mut(name).expect("backbone weights exist");
                w.scaled_add(-lr, &g);
            }
        }
        Ok(())
    }

    /// One epoch: match (when the mode calls for it), update, train θ.
    pub fn epoch(&self, state: &mut MatchingState) -> Result<()> {
        let (k, t) = (state.k, state.t);
        let wrap = |e: Error| Error::Epoch {
            k,
            t,
            source: Box::new(e),
        };
        let matched = self.config.matching_mode == MatchingMode::Full || t == 0;
        if matched {
            let group = schedule_group(t, self.config.t1, self.config.t2);
            let grads = self.matching_gradients(state, group).map_err(wrap)?;
            if !grads.total.is_finite() {
                return Err(wrap(Error::NonFinite {
                    op: "matching_loss",
                }));
            }
            log::debug!("k={k} t={t} M={:.6} group={group:?}", grads.total);
            state.history.records.push(LossRecord {
                k,
                t,
                total: grads.total,
                per_class: grads.per_class.clone(),
            });
            self.apply(state, &grads).map_err(wrap)?;
        }
        self.inner_theta_train(state, self.config.inner_steps)
            .map_err(wrap)
    }

    /// Runs every restart and epoch from `state`, then thresholds.
    pub fn run(&self, mut state: MatchingState) -> Result<CondenseOutput> {
        let d = state.phi.output_dim();
        let started = std::time::Instant::now();
        for k in 0..self.config.restarts {
            state.k = k;
            state.theta = self.theta(k, d);
            for t in 0..self.config.epochs {
                state.t = t;
                self.epoch(&mut state)?;
            }
            if let Some(last) = state.history.records.last() {
                log::info!(
                    "restart {k}: M={:.6} elapsed {:.1}s",
                    last.total,
                    started.elapsed().as_secs_f64()
                );
            }
        }
        self.finish(state)
    }

    /// Final condensed graph from a state: `γ`-thresholded adjacency when
    /// structure is learned, identity otherwise.
    pub fn finish(&self, state: MatchingState) -> Result<CondenseOutput> {
        let (a_hat, gamma) = match self.config.structure_mode {
            StructureMode::Learned => (
                threshold_adjacency(&self.adjacency(&state)?, self.config.gamma),
                Some(self.config.gamma),
            ),
            StructureMode::Identity => (Matrix::eye(state.y_hat.len()), None),
        };
        let condensed = CondensedGraph {
            x_hat: state.x_hat().clone(),
            a_hat,
            y_hat: state.y_hat.clone(),
            num_classes: self.graph.num_classes,
            gamma,
        };
        condensed.validate()?;
        Ok(CondenseOutput {
            condensed,
            phi: state.phi,
            history: state.history,
        })
    }
}

/// Condenses `graph` with a freshly initialized condenser.
pub fn condense(graph: &Graph, config: &CondenserConfig) -> Result<CondenseOutput> {
    let c = Condenser::new(graph, config)?;
    let state = c.init_state()?;
    c.run(state)
}

/// Condenses `graph` around a given condenser. Fixed encoders (identity,
/// projection) are never updated; their output width sets `d`.
pub fn condense_with(
    graph: &Graph,
    config: &CondenserConfig,
    phi: Encoder,
) -> Result<CondenseOutput> {
    let c = Condenser::new(graph, config)?;
    let state = c.init_state_with(phi)?;
    c.run(state)
}
