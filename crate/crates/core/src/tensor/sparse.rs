use crate::error::{Error, Result};

use super::Matrix;

/// Compressed sparse row matrix. Column indices within a row are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are an error.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::Domain {
                    op: "csr",
                    msg: format!("entry ({r},{c}) outside {rows}x{cols}"),
                });
            }
            if last == Some((r, c)) {
                return Err(Error::Domain {
                    op: "csr",
                    msg: format!("duplicate entry ({r},{c})"),
                });
            }
            last = Some((r, c));
            indptr[r + 1] += 1;
            indices.push(c);
            values.push(v);
        }
        for i in 0..rows {
            indptr[i + 1] += indptr[i];
        }
        Ok(CsrMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros((self.rows, self.cols));
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// `self · x`.
    pub fn matmul_dense(&self, x: &Matrix) -> Result<Matrix> {
        if self.cols != x.nrows() {
            return Err(Error::Shape {
                op: "propagate",
                lhs: (self.rows, self.cols),
                rhs: x.dim(),
            });
        }
        let f = x.ncols();
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.rows * f];
        for i in 0..self.rows {
            let dst = &mut out[i * f..(i + 1) * f];
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let src = &xs[j * f..(j + 1) * f];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(Matrix::from_shape_vec((self.rows, f), out).expect("shape"))
    }

    /// `selfᵀ · g`.
    pub fn transpose_matmul_dense(&self, g: &Matrix) -> Result<Matrix> {
        if self.rows != g.nrows() {
            return Err(Error::Shape {
                op: "propagate_adjoint",
                lhs: (self.cols, self.rows),
                rhs: g.dim(),
            });
        }
        let f = g.ncols();
        let g = g.as_standard_layout();
        let gs = g.as_slice().expect("standard layout");
        let mut out = vec![0.0; self.cols * f];
        for i in 0..self.rows {
            let src = &gs[i * f..(i + 1) * f];
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let dst = &mut out[j * f..(j + 1) * f];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        Ok(Matrix::from_shape_vec((self.cols, f), out).expect("shape"))
    }
}
