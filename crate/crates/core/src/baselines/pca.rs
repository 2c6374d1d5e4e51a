use rand::Rng;

use crate::error::{Error, Result};
use crate::models::Encoder;
use crate::rng;
use crate::tensor::Matrix;

/// Principal components of a data matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Column means, 1×D.
    pub mean: Matrix,
    /// Orthonormal rows, d×D, by nonincreasing explained variance.
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

/// Default power-iteration budget per component.
pub const PCA_ITERS: usize = 200;

fn unit(mut v: ndarray::Array1<f64>) -> Option<ndarray::Array1<f64>> {
    let norm = v.dot(&v).sqrt();
    if norm <= 1e-300 {
        return None;
    }
    v /= norm;
    Some(v)
}

/// Gram-Schmidt against the rows found so far (applied twice for accuracy).
fn orthogonalize(v: &mut ndarray::Array1<f64>, basis: &[ndarray::Array1<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = v.dot(b);
            v.scaled_add(-p, b);
        }
    }
}

/// Leading eigenvectors of the symmetric PSD matrix `s` by power iteration,
/// each kept orthogonal to the previous ones (deflation by projection).
fn top_eigenvectors(s: &Matrix, k: usize, iters: usize, seed: u64) -> Vec<ndarray::Array1<f64>> {
    let dim = s.nrows();
    let scale = s
        .diag()
        .iter()
        .map(|v| v.abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let mut found: Vec<ndarray::Array1<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut r = rng::stream(seed, &format!("pca/{i}"));
        let mut v = ndarray::Array1::from_shape_fn(dim, |_| r.random_range(-1.0..1.0));
        orthogonalize(&mut v, &found);
        let mut v = match unit(v) {
            Some(v) => v,
            None => break,
        };
        let mut null = false;
        for _ in 0..iters {
            let mut w = s.dot(&v);
            orthogonalize(&mut w, &found);
            if w.dot(&w).sqrt() <= 1e-13 * scale {
                null = true;
                break;
            }
            let w = unit(w).expect("norm checked");
            let delta = (&w - &v).mapv(f64::abs).sum();
            v = w;
            if delta < 1e-15 * dim as f64 {
                break;
            }
        }
        if null {
            // Remaining directions carry no variance; leave them to completion.
            break;
        }
        found.push(v);
    }
    found
}

/// Fills the basis up to `k` orthonormal vectors with standard basis
/// directions outside its span, in index order.
fn complete(basis: &mut Vec<ndarray::Array1<f64>>, dim: usize, k: usize) {
    let mut e = 0;
    while basis.len() < k && e < dim {
        let mut v = ndarray::Array1::zeros(dim);
        v[e] = 1.0;
        orthogonalize(&mut v, basis);
        if v.dot(&v).sqrt() > 1e-6 {
            basis.push(unit(v).expect("norm checked"));
        }
        e += 1;
    }
}

fn canonical_sign(v: &mut ndarray::Array1<f64>) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Top-`d` principal components of `x` by power iteration with deflation.
///
/// When `d` exceeds the rank of the centered data, the surplus components
/// span directions of zero variance. Signs are canonicalized so the
/// largest-magnitude coordinate of each component is positive.
pub fn pca_fit(x: &Matrix, d: usize, iters: usize, seed: u64) -> Result<PcaModel> {
    let (n, dim) = x.dim();
    if d == 0 || d > dim || n == 0 {
        return Err(Error::Config(format!(
            "cannot fit {d} components to {n}x{dim} data"
        )));
    }
    let mean = x
        .mean_axis(ndarray::Axis(0))
        .expect("n > 0")
        .insert_axis(ndarray::Axis(0));
    let xc = x - &mean;
    let denom = (n.max(2) - 1) as f64;

    // Work in the smaller of the feature and sample spaces.
    let mut comps = if n < dim {
        let gram = xc.dot(&xc.t()) / denom;
        top_eigenvectors(&gram, d.min(n), iters, seed)
            .into_iter()
            .filter_map(|u| unit(xc.t().dot(&u)))
            .collect()
    } else {
        let cov = xc.t().dot(&xc) / denom;
        top_eigenvectors(&cov, d, iters, seed)
    };
    let mut basis = Vec::with_capacity(d);
    for v in comps.drain(..) {
        let mut v = v;
        orthogonalize(&mut v, &basis);
        if let Some(v) = unit(v) {
            basis.push(v);
        }
    }
    complete(&mut basis, dim, d);

    let mut components = Matrix::zeros((d, dim));
    let mut explained = Vec::with_capacity(d);
    for (i, mut v) in basis.into_iter().enumerate() {
        canonical_sign(&mut v);
        let proj = xc.dot(&v);
        explained.push(proj.dot(&proj) / denom);
        components.row_mut(i).assign(&v);
    }
    // Power iteration finds components in order up to round-off; enforce it.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| explained[b].total_cmp(&explained[a]).then(a.cmp(&b)));
    let components = components.select(ndarray::Axis(0), &order);
    let explained_variance = order.iter().map(|&i| explained[i]).collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// `(x − mean) · componentsᵀ`.
pub fn pca_transform(model: &PcaModel, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != model.components.ncols() {
        return Err(Error::Shape {
            op: "pca_transform",
            lhs: x.dim(),
            rhs: model.components.dim(),
        });
    }
    Ok((x - &model.mean).dot(&model.components.t()))
}

impl PcaModel {
    pub fn num_components(&self) -> usize {
        self.components.nrows()
    }

    /// `mean + y · components`.
    pub fn inverse_transform(&self, y: &Matrix) -> Matrix {
        y.dot(&self.components) + &self.mean
    }

    /// The projection as a fixed affine encoder.
    pub fn encoder(&self) -> Result<Encoder> {
        let weight = self.components.t().to_owned();
        let bias = -self.mean.dot(&weight);
        Encoder::projection(weight, bias)
    }
}
