use crate::error::Result;
use crate::tensor::{Matrix, Tape, Var};

use super::{glorot_uniform, ParamSet, ParamVars, Role};

/// Hidden width of both hidden layers of the link MLP.
pub const LINK_HIDDEN: usize = 128;

/// Link generator `k_Ψ`: a 3-layer MLP `2d → hidden → hidden → 1` with ReLU
/// between layers. Weights are Glorot, biases zero.
pub fn init_link_generator(feature_dim: usize, hidden: usize, seed: u64) -> ParamSet {
    let mut p = ParamSet::new(Role::Psi);
    let layers = [
        ("w1", "b1", 2 * feature_dim, hidden),
        ("w2", "b2", hidden, hidden),
        ("w3", "b3", hidden, 1),
    ];
    for (w, b, r, c) in layers {
        p.insert(w, glorot_uniform(seed, &format!("psi/{w}"), r, c))
            .expect("unique names");
        p.insert(b, Matrix::zeros((1, c))).expect("unique names");
    }
    p
}

/// `Â_ij = σ((k(x̂_i ⊕ x̂_j) + k(x̂_j ⊕ x̂_i)) / 2)` off the diagonal, 1 on it.
///
/// The first layer is split into the halves acting on `x̂_i` and `x̂_j`, so
/// all `n²` ordered pairs are evaluated as one batch of rows `i·n + j`.
/// Adding `K` to `Kᵀ` makes the result symmetric bit for bit.
pub fn build_adjacency_on_tape(tape: &mut Tape, x_hat: Var, vars: &ParamVars) -> Result<Var> {
    let (n, d) = tape.shape(x_hat);
    let w1 = vars.get("w1")?;
    let top_rows: Vec<usize> = (0..d).collect();
    let bottom_rows: Vec<usize> = (d..2 * d).collect();
    let w_top = tape.gather_rows(w1, &top_rows)?;
    let w_bottom = tape.gather_rows(w1, &bottom_rows)?;
    let u = tape.matmul(x_hat, w_top)?;
    let v = tape.matmul(x_hat, w_bottom)?;
    let left: Vec<usize> = (0..n * n).map(|r| r / n).collect();
    let right: Vec<usize> = (0..n * n).map(|r| r % n).collect();
    let ones = tape.constant(Matrix::ones((n * n, 1)));

    let ui = tape.gather_rows(u, &left)?;
    let vj = tape.gather_rows(v, &right)?;
    let h = tape.add(ui, vj)?;
    let b1 = tape.matmul(ones, vars.get("b1")?)?;
    let h = tape.add(h, b1)?;
    let h = tape.relu(h)?;

    let h = tape.matmul(h, vars.get("w2")?)?;
    let b2 = tape.matmul(ones, vars.get("b2")?)?;
    let h = tape.add(h, b2)?;
    let h = tape.relu(h)?;

    let k = tape.matmul(h, vars.get("w3")?)?;
    let b3 = tape.matmul(ones, vars.get("b3")?)?;
    let k = tape.add(k, b3)?;
    let k = tape.reshape(k, n, n)?;

    let kt = tape.transpose(k)?;
    let sym = tape.add(k, kt)?;
    let sym = tape.scale(sym, 0.5)?;
    let s = tape.sigmoid(sym)?;
    let off = tape.constant(Matrix::ones((n, n)) - Matrix::eye(n));
    let s = tape.hadamard(s, off)?;
    let eye = tape.constant(Matrix::eye(n));
    tape.add(s, eye)
}

pub fn build_adjacency(x_hat: &Matrix, psi: &ParamSet) -> Result<Matrix> {
    let mut tape = Tape::new();
    let x = tape.constant(x_hat.clone());
    let vars = psi.register(&mut tape, false);
    let a = build_adjacency_on_tape(&mut tape, x, &vars)?;
    Ok(tape.value(a).clone())
}

/// `D^{-1/2} A D^{-1/2}` for a dense adjacency whose diagonal is already 1,
/// with degrees taken as row sums.
pub fn normalize_on_tape(tape: &mut Tape, a: Var) -> Result<Var> {
    let deg = tape.row_sum(a)?;
    let r = tape.powf(deg, -0.5)?;
    let rt = tape.transpose(r)?;
    let outer = tape.matmul(r, rt)?;
    tape.hadamard(a, outer)
}
