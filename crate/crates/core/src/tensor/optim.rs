//! First-order optimizers over [`ParamSet`]s.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::models::{ParamGrads, ParamSet};

use super::Matrix;

fn check_keys(params: &ParamSet, grads: &ParamGrads) -> Result<()> {
    for name in grads.0.keys() {
        if params.get(name).is_none() {
            return Err(Error::Invariant(format!(
                "gradient for unknown parameter {name}"
            )));
        }
    }
    for name in params.names() {
        if !grads.0.contains_key(name) {
            return Err(Error::Invariant(format!(
                "no gradient for parameter {name}"
            )));
        }
    }
    Ok(())
}

/// Plain gradient descent, optionally with L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd {
            lr,
            weight_decay: 0.0,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamGrads) -> Result<()> {
        check_keys(params, grads)?;
        for (name, g) in &grads.0 {
            let w = params.get_mut(name).expect("keys checked");
            if w.dim() != g.dim() {
                return Err(Error::Shape {
                    op: "sgd",
                    lhs: w.dim(),
                    rhs: g.dim(),
                });
            }
            let wd = self.weight_decay;
            ndarray::Zip::from(w)
                .and(g)
                .for_each(|w, &g| *w -= self.lr * (g + wd * *w));
        }
        Ok(())
    }
}

/// Adam with bias correction. Weight decay is added to the gradient before
/// the moment updates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    moments: HashMap<String, (Matrix, Matrix)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            t: 0,
            moments: HashMap::new(),
        }
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamGrads) -> Result<()> {
        check_keys(params, grads)?;
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (name, g) in &grads.0 {
            let w = params.get_mut(name).expect("keys checked");
            if w.dim() != g.dim() {
                return Err(Error::Shape {
                    op: "adam",
                    lhs: w.dim(),
                    rhs: g.dim(),
                });
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Matrix::zeros(g.dim()), Matrix::zeros(g.dim())));
            let (lr, eps, wd) = (self.lr, self.eps, self.weight_decay);
            ndarray::Zip::from(w)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    let g = g + wd * *w;
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *w -= lr * mh / (vh.sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// Either optimizer behind one interface, picked by configuration.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamGrads) -> Result<()> {
        match self {
            Optimizer::Sgd(o) => o.step(params, grads),
            Optimizer::Adam(o) => o.step(params, grads),
        }
    }
}
