use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_io::{dense_neighborhoods, edge_neighborhoods, normalize_dense, normalize_edges};
use crate::tensor::{CsrMatrix, Matrix, Tape, Var};

use super::{glorot_uniform, ParamSet, ParamVars, Role};

/// Negative slope of the LeakyReLU inside attention scores.
pub const GAT_SLOPE: f64 = 0.2;

/// Feature condenser architectures. `Identity` and `Projection` are fixed
/// maps used by the baselines and never trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Gat,
    Gcn,
    Mlp,
    Linear,
    Identity,
    Projection,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Gat => "gat",
            EncoderKind::Gcn => "gcn",
            EncoderKind::Mlp => "mlp",
            EncoderKind::Linear => "linear",
            EncoderKind::Identity => "identity",
            EncoderKind::Projection => "projection",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gat" => EncoderKind::Gat,
            "gcn" => EncoderKind::Gcn,
            "mlp" => EncoderKind::Mlp,
            "linear" => EncoderKind::Linear,
            "identity" => EncoderKind::Identity,
            "projection" => EncoderKind::Projection,
            _ => return Err(Error::Config(format!("unknown condenser variant {s:?}"))),
        })
    }
}

/// Architecture and dimensions of an encoder; stored in condensed `meta.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: usize,
}

/// Structure an encoder reads: closed neighborhoods for attention and the
/// normalized adjacency for graph convolution.
#[derive(Debug, Clone)]
pub struct EncoderGraph {
    pub neighborhoods: Arc<CsrMatrix>,
    pub propagation: Arc<CsrMatrix>,
}

impl EncoderGraph {
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Self {
        EncoderGraph {
            neighborhoods: edge_neighborhoods(num_nodes, edges),
            propagation: Arc::clone(normalize_edges(num_nodes, edges).csr()),
        }
    }

    pub fn from_dense(a: &Matrix) -> Self {
        EncoderGraph {
            neighborhoods: dense_neighborhoods(a),
            propagation: Arc::clone(normalize_dense(a).csr()),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.propagation.rows()
    }
}

/// A feature condenser `f_Φ` together with its weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    spec: EncoderSpec,
    params: ParamSet,
}

fn shapes(spec: &EncoderSpec) -> Vec<(String, usize, usize)> {
    let (i, h, o) = (spec.input_dim, spec.hidden, spec.output_dim);
    let s = |n: &str, r, c| (n.to_string(), r, c);
    match spec.kind {
        EncoderKind::Gat => vec![
            s("w1", i, h),
            s("a_src1", h, 1),
            s("a_dst1", h, 1),
            s("w2", h, o),
            s("a_src2", o, 1),
            s("a_dst2", o, 1),
        ],
        EncoderKind::Gcn | EncoderKind::Mlp => vec![s("w1", i, h), s("w2", h, o)],
        EncoderKind::Linear => vec![s("w", i, o)],
        EncoderKind::Identity => vec![],
        EncoderKind::Projection => vec![s("weight", i, o), s("bias", 1, o)],
    }
}

impl Encoder {
    /// Glorot-initialized trainable encoder.
    pub fn init(
        kind: EncoderKind,
        input_dim: usize,
        output_dim: usize,
        hidden: usize,
        seed: u64,
    ) -> Result<Self> {
        if matches!(kind, EncoderKind::Identity | EncoderKind::Projection) {
            return Err(Error::Config(format!(
                "{kind} encoders are not initialized randomly"
            )));
        }
        if input_dim == 0 || output_dim == 0 || hidden == 0 {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        let spec = EncoderSpec {
            kind,
            input_dim,
            output_dim,
            hidden,
        };
        let mut params = ParamSet::new(Role::Phi);
        for (name, r, c) in shapes(&spec) {
            params.insert(&name, glorot_uniform(seed, &format!("phi/{name}"), r, c))?;
        }
        Ok(Encoder { spec, params })
    }

    pub fn identity(dim: usize) -> Self {
        Encoder {
            spec: EncoderSpec {
                kind: EncoderKind::Identity,
                input_dim: dim,
                output_dim: dim,
                hidden: 0,
            },
            params: ParamSet::new(Role::Phi),
        }
    }

    /// Fixed affine map `x ↦ x·weight + bias`.
    pub fn projection(weight: Matrix, bias: Matrix) -> Result<Self> {
        if bias.dim() != (1, weight.ncols()) {
            return Err(Error::Shape {
                op: "projection",
                lhs: weight.dim(),
                rhs: bias.dim(),
            });
        }
        let spec = EncoderSpec {
            kind: EncoderKind::Projection,
            input_dim: weight.nrows(),
            output_dim: weight.ncols(),
            hidden: 0,
        };
        let mut params = ParamSet::new(Role::Phi);
        params.insert("weight", weight)?;
        params.insert("bias", bias)?;
        Ok(Encoder { spec, params })
    }

    /// Rebuilds an encoder from its spec and `params.json` contents,
    /// checking every expected matrix is present with the right shape.
    pub fn from_json(spec: EncoderSpec, value: &serde_json::Value) -> Result<Self> {
        let loaded = ParamSet::from_json(Role::Phi, value)?;
        let mut params = ParamSet::new(Role::Phi);
        let expected = shapes(&spec);
        for (name, r, c) in &expected {
            let m = loaded
                .get(name)
                .ok_or_else(|| Error::invalid("params.json", format!("missing {name}")))?;
            if m.dim() != (*r, *c) {
                return Err(Error::invalid(
                    "params.json",
                    format!("{name} is {:?}, expected ({r}, {c})", m.dim()),
                ));
            }
            params.insert(name, m.clone())?;
        }
        if loaded.len() != expected.len() {
            return Err(Error::invalid("params.json", "unexpected extra parameters"));
        }
        Ok(Encoder { spec, params })
    }

    pub fn spec(&self) -> EncoderSpec {
        self.spec
    }

    pub fn kind(&self) -> EncoderKind {
        self.spec.kind
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Whether the condensation loop updates this encoder.
    pub fn is_trainable(&self) -> bool {
        !matches!(
            self.spec.kind,
            EncoderKind::Identity | EncoderKind::Projection
        )
    }

    /// Records the forward pass on `tape`; `vars` must come from
    /// `self.params().register(..)` on the same tape.
    pub fn encode_on_tape(
        &self,
        tape: &mut Tape,
        graph: &EncoderGraph,
        x: Var,
        vars: &ParamVars,
    ) -> Result<Var> {
        let (n, cols) = tape.shape(x);
        if cols != self.spec.input_dim {
            return Err(Error::Shape {
                op: "encode",
                lhs: (n, cols),
                rhs: (self.spec.input_dim, self.spec.output_dim),
            });
        }
        let needs_graph = matches!(self.spec.kind, EncoderKind::Gat | EncoderKind::Gcn);
        if needs_graph && graph.num_nodes() != n {
            return Err(Error::Shape {
                op: "encode",
                lhs: (n, cols),
                rhs: (graph.num_nodes(), graph.num_nodes()),
            });
        }
        match self.spec.kind {
            EncoderKind::Gat => {
                let h = gat_layer(tape, &graph.neighborhoods, x, vars, "1")?;
                let h = tape.relu(h)?;
                gat_layer(tape, &graph.neighborhoods, h, vars, "2")
            }
            EncoderKind::Gcn => {
                let h = tape.matmul(x, vars.get("w1")?)?;
                let h = tape.propagate(&graph.propagation, h)?;
                let h = tape.relu(h)?;
                let h = tape.matmul(h, vars.get("w2")?)?;
                tape.propagate(&graph.propagation, h)
            }
            EncoderKind::Mlp => {
                let h = tape.matmul(x, vars.get("w1")?)?;
                let h = tape.relu(h)?;
                tape.matmul(h, vars.get("w2")?)
            }
            EncoderKind::Linear => tape.matmul(x, vars.get("w")?),
            EncoderKind::Identity => Ok(x),
            EncoderKind::Projection => {
                let ones = tape.constant(Matrix::ones((n, 1)));
                let b = tape.matmul(ones, vars.get("bias")?)?;
                let h = tape.matmul(x, vars.get("weight")?)?;
                tape.add(h, b)
            }
        }
    }

    /// Off-tape forward pass.
    pub fn encode(&self, graph: &EncoderGraph, x: &Matrix) -> Result<Matrix> {
        if self.spec.kind == EncoderKind::Identity {
            if x.ncols() != self.spec.input_dim {
                return Err(Error::Shape {
                    op: "encode",
                    lhs: x.dim(),
                    rhs: (self.spec.input_dim, self.spec.output_dim),
                });
            }
            return Ok(x.clone());
        }
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let vars = self.params.register(&mut tape, false);
        let out = self.encode_on_tape(&mut tape, graph, xv, &vars)?;
        Ok(tape.value(out).clone())
    }

    /// Attention coefficients of each GAT layer, aligned with the storage
    /// order of `graph.neighborhoods`.
    pub fn attention(&self, graph: &EncoderGraph, x: &Matrix) -> Result<Vec<Vec<f64>>> {
        if self.spec.kind != EncoderKind::Gat {
            return Err(Error::Config(format!(
                "{} encoders have no attention",
                self.spec.kind
            )));
        }
        let p = &self.params;
        let mut h = x.clone();
        let mut out = Vec::new();
        for layer in ["1", "2"] {
            let hw = h.dot(p.expect(&format!("w{layer}"))?);
            let src = hw.dot(p.expect(&format!("a_src{layer}"))?);
            let dst = hw.dot(p.expect(&format!("a_dst{layer}"))?);
            let (alpha, _) =
                crate::tensor::attention_weights(&graph.neighborhoods, &src, &dst, GAT_SLOPE)?;
            let mut next = Matrix::zeros(hw.dim());
            let pat = &graph.neighborhoods;
            for i in 0..pat.rows() {
                // CSR positions index both the pattern and the coefficients
                #[allow(clippy::needless_range_loop)]
                for k in pat.indptr()[i]..pat.indptr()[i + 1] {
                    let j = pat.indices()[k];
                    next.row_mut(i).scaled_add(alpha[k], &hw.row(j));
                }
            }
            h = if layer == "1" {
                next.mapv(|v| v.max(0.0))
            } else {
                next
            };
            out.push(alpha);
        }
        Ok(out)
    }
}

fn gat_layer(
    tape: &mut Tape,
    pattern: &Arc<CsrMatrix>,
    h: Var,
    vars: &ParamVars,
    layer: &str,
) -> Result<Var> {
    let hw = tape.matmul(h, vars.get(&format!("w{layer}"))?)?;
    let src = tape.matmul(hw, vars.get(&format!("a_src{layer}"))?)?;
    let dst = tape.matmul(hw, vars.get(&format!("a_dst{layer}"))?)?;
    tape.neighbor_attention(pattern, src, dst, hw, GAT_SLOPE)
}

/// Reference GAT layer built from dense primitives: scores
/// `leaky(src·1ᵀ + 1·dstᵀ)`, a masked row softmax, then `α · (h W)`.
/// Quadratic in the node count; used to cross-check the fused layer.
pub fn gat_layer_dense(
    tape: &mut Tape,
    mask: &Array2<bool>,
    h: Var,
    w: Var,
    a_src: Var,
    a_dst: Var,
) -> Result<Var> {
    let n = tape.shape(h).0;
    let hw = tape.matmul(h, w)?;
    let src = tape.matmul(hw, a_src)?;
    let dst = tape.matmul(hw, a_dst)?;
    let ones = tape.constant(Matrix::ones((1, n)));
    let ones_t = tape.constant(Matrix::ones((n, 1)));
    let s = tape.matmul(src, ones)?;
    let dst_t = tape.transpose(dst)?;
    let d = tape.matmul(ones_t, dst_t)?;
    let e = tape.add(s, d)?;
    let e = tape.leaky_relu(e, GAT_SLOPE)?;
    let alpha = tape.masked_row_softmax(e, Some(mask))?;
    tape.matmul(alpha, hw)
}
