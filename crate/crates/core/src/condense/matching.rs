use std::sync::Arc;

use crate::error::{Error, Result};
use crate::models::{build_adjacency_on_tape, normalize_on_tape, sgc_loss_grads, ParamVars};
use crate::tensor::{CsrMatrix, Tape, Var};

/// Fixed index structure of one matching evaluation.
#[derive(Debug, Clone)]
pub struct MatchingInputs<'a> {
    /// Normalized adjacency of the original (condensation) graph.
    pub propagation: &'a Arc<CsrMatrix>,
    pub hops: usize,
    /// Per class: original-graph rows whose loss gradient is matched.
    pub batches: &'a [Vec<usize>],
    /// Per class: condensed rows carrying that label.
    pub synthetic: &'a [Vec<usize>],
}

#[derive(Debug, Clone)]
pub struct MatchingLoss {
    pub total: Var,
    /// Per-class contribution; 0 for skipped classes.
    pub per_class: Vec<f64>,
}

/// `M = Σ_c Σ_{W ∈ {W1, W2}} Σ_h (1 − cos)` between the backbone gradients on
/// the original batch of class `c` and on the condensed nodes of class `c`.
///
/// `x_tilde` holds encoded original features (all nodes), `x_hat` the
/// condensed features. With `psi` the condensed adjacency is built by the
/// link generator; without it the condensed graph has no edges. Classes
/// with no condensed node or an empty batch contribute nothing.
pub fn matching_loss(
    tape: &mut Tape,
    inputs: &MatchingInputs<'_>,
    x_tilde: Var,
    x_hat: Var,
    psi: Option<&ParamVars>,
    w1: Var,
    w2: Var,
) -> Result<MatchingLoss> {
    let mut z_orig = x_tilde;
    for _ in 0..inputs.hops {
        z_orig = tape.propagate(inputs.propagation, z_orig)?;
    }
    let mut z_syn = x_hat;
    if let Some(psi) = psi {
        let a = build_adjacency_on_tape(tape, x_hat, psi)?;
        let p = normalize_on_tape(tape, a)?;
        for _ in 0..inputs.hops {
            z_syn = tape.matmul(p, z_syn)?;
        }
    }

    let mut total: Option<Var> = None;
    let mut per_class = vec![0.0; inputs.synthetic.len()];
    for (c, (batch, syn)) in inputs.batches.iter().zip(inputs.synthetic).enumerate() {
        if batch.is_empty() || syn.is_empty() {
            log::warn!(
                "class {c}: nothing to match (batch {}, condensed {})",
                batch.len(),
                syn.len()
            );
            continue;
        }
        let term =
            class_term(tape, z_orig, z_syn, batch, syn, c, w1, w2).map_err(|e| Error::Class {
                class: c,
                source: Box::new(e),
            })?;
        per_class[c] = tape.scalar(term);
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    let total = match total {
        Some(t) => t,
        None => {
            return Err(Error::Domain {
                op: "matching_loss",
                msg: "no class has both original and condensed nodes".into(),
            })
        }
    };
    Ok(MatchingLoss { total, per_class })
}

#[allow(clippy::too_many_arguments)]
fn class_term(
    tape: &mut Tape,
    z_orig: Var,
    z_syn: Var,
    batch: &[usize],
    syn: &[usize],
    class: usize,
    w1: Var,
    w2: Var,
) -> Result<Var> {
    let zt = tape.gather_rows(z_orig, batch)?;
    let (g1t, g2t) = sgc_loss_grads(tape, zt, &vec![class; batch.len()], w1, w2)?;
    let zs = tape.gather_rows(z_syn, syn)?;
    let (g1s, g2s) = sgc_loss_grads(tape, zs, &vec![class; syn.len()], w1, w2)?;
    let m1 = tape.cosine_column_distance_sum(g1t, g1s)?;
    let m2 = tape.cosine_column_distance_sum(g2t, g2s)?;
    tape.add(m1, m2)
}
