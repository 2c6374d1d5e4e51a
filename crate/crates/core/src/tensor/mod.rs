//! Dense `f64` matrices and a reverse-mode differentiation tape.
//!
//! Values are [`ndarray::Array2<f64>`]. Sparse matrices appear only as fixed
//! linear operators ([`CsrMatrix`]) that the tape applies with a hand-written
//! adjoint; everything that carries a gradient is dense.

pub mod gradcheck;
pub mod optim;
mod sparse;
mod tape;

pub use sparse::CsrMatrix;
pub(crate) use tape::attention_coefficients as attention_weights;
#[cfg(test)]
pub(crate) use tape::sigmoid;
pub use tape::{Gradients, Tape, Var, COSINE_EPS};

pub type Matrix = ndarray::Array2<f64>;

/// Builds a row-major matrix, panicking on a length mismatch. Handy in tests.
pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
    Matrix::from_shape_vec((rows, cols), data).expect("matrix: data length must equal rows * cols")
}
