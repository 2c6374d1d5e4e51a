use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_io::NormalizedAdjacency;
use crate::tensor::{Matrix, Tape, Var};

use super::{ParamSet, Role};

/// Linear GNN: propagate `hops` times, then `W1` (d×hidden) and `W2`
/// (hidden×C) with no nonlinearity, so its loss gradient has a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgcBackbone {
    pub hops: usize,
    pub hidden: usize,
}

impl Default for SgcBackbone {
    fn default() -> Self {
        SgcBackbone {
            hops: 2,
            hidden: 256,
        }
    }
}

impl SgcBackbone {
    /// Fresh Glorot weights `w1`, `w2` drawn from streams keyed by `seed`.
    pub fn init(&self, seed: u64, in_dim: usize, num_classes: usize) -> ParamSet {
        ParamSet::glorot(
            Role::Theta,
            seed,
            &[
                ("w1", in_dim, self.hidden),
                ("w2", self.hidden, num_classes),
            ],
        )
    }
}

/// `(P̃^hops · x) W1 W2`.
pub fn sgc_forward(
    p: &NormalizedAdjacency,
    x: &Matrix,
    theta: &ParamSet,
    hops: usize,
) -> Result<Matrix> {
    let (w1, w2) = (theta.expect("w1")?, theta.expect("w2")?);
    if x.ncols() != w1.nrows() || p.num_nodes() != x.nrows() {
        return Err(Error::Shape {
            op: "sgc_forward",
            lhs: x.dim(),
            rhs: w1.dim(),
        });
    }
    Ok(p.propagate(x, hops).dot(w1).dot(w2))
}

/// Closed-form `∇_{W1}, ∇_{W2}` of the mean cross-entropy of `z W1 W2`,
/// recorded on the tape so the result stays differentiable in `z`, `w1` and
/// `w2`. `z` holds the already propagated rows of the batch.
///
/// With `E = (softmax(z W1 W2) − onehot) / m`: `G_W2 = (z W1)ᵀ E` and
/// `G_W1 = zᵀ E W2ᵀ`.
pub fn sgc_loss_grads(
    tape: &mut Tape,
    z: Var,
    labels: &[usize],
    w1: Var,
    w2: Var,
) -> Result<(Var, Var)> {
    let (m, _) = tape.shape(z);
    let c = tape.shape(w2).1;
    if m == 0 {
        return Err(Error::Domain {
            op: "sgc_loss_grads",
            msg: "empty batch".into(),
        });
    }
    if labels.len() != m {
        return Err(Error::Shape {
            op: "sgc_loss_grads",
            lhs: tape.shape(z),
            rhs: (labels.len(), 1),
        });
    }
    let mut onehot = Matrix::zeros((m, c));
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Domain {
                op: "sgc_loss_grads",
                msg: format!("label {y} outside [0,{c})"),
            });
        }
        onehot[[i, y]] = 1.0;
    }
    let onehot = tape.constant(onehot);
    let h = tape.matmul(z, w1)?;
    let logits = tape.matmul(h, w2)?;
    let probs = tape.row_softmax(logits)?;
    let diff = tape.sub(probs, onehot)?;
    let e = tape.scale(diff, 1.0 / m as f64)?;
    let ht = tape.transpose(h)?;
    let g_w2 = tape.matmul(ht, e)?;
    let w2t = tape.transpose(w2)?;
    let ew2t = tape.matmul(e, w2t)?;
    let zt = tape.transpose(z)?;
    let g_w1 = tape.matmul(zt, ew2t)?;
    Ok((g_w1, g_w2))
}

/// Off-tape mean cross-entropy and its closed-form gradients
/// `(loss, G_W1, G_W2)` for the inner backbone updates.
pub fn sgc_loss_and_grads(
    z: &Matrix,
    labels: &[usize],
    w1: &Matrix,
    w2: &Matrix,
) -> Result<(f64, Matrix, Matrix)> {
    let m = z.nrows();
    if m == 0 || labels.len() != m || z.ncols() != w1.nrows() || w1.ncols() != w2.nrows() {
        return Err(Error::Shape {
            op: "sgc_loss_and_grads",
            lhs: z.dim(),
            rhs: w1.dim(),
        });
    }
    let h = z.dot(w1);
    let mut e = h.dot(w2);
    let c = e.ncols();
    let mut loss = 0.0;
    for (mut row, &y) in e.outer_iter_mut().zip(labels) {
        if y >= c {
            return Err(Error::Domain {
                op: "sgc_loss_and_grads",
                msg: format!("label {y} outside [0,{c})"),
            });
        }
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let target = row[y];
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        loss += sum.ln() + max - target;
        row.mapv_inplace(|v| v / sum);
        row[y] -= 1.0;
    }
    let inv = 1.0 / m as f64;
    e.mapv_inplace(|v| v * inv);
    let g_w2 = h.t().dot(&e);
    let g_w1 = z.t().dot(&e.dot(&w2.t()));
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "sgc_loss_and_grads",
        });
    }
    Ok((loss * inv, g_w1, g_w2))
}
