//! Central finite-difference oracle for tape gradients.
//!
//! The numeric side only ever reads forward values, so it stays independent
//! of every backward rule it is used to check.

use crate::error::Result;

use super::{Matrix, Tape, Var};

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub step: f64,
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            step: 1e-6,
            rel: 1e-4,
            abs: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates outside both tolerances.
    pub failures: usize,
    pub max_abs_err: f64,
    /// Largest relative error among coordinates that failed the absolute test.
    pub max_rel_err: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checked > 0
    }
}

/// Compares `backward` against central differences of `f` for every
/// coordinate of every input. `f` must build a scalar from the given handles.
pub fn check<F>(inputs: &[Matrix], tol: Tolerance, f: F) -> Result<Report>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Matrix> = vars
        .iter()
        .map(|&v| grads.take(v).expect("every input is trainable"))
        .collect();

    let eval = |values: &[Matrix]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = values.iter().map(|m| t.constant(m.clone())).collect();
        let out = f(&mut t, &vs)?;
        Ok(t.scalar(out))
    };

    let mut report = Report::default();
    let mut work: Vec<Matrix> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for ((r, c), &x0) in input.indexed_iter() {
            work[k][[r, c]] = x0 + tol.step;
            let up = eval(&work)?;
            work[k][[r, c]] = x0 - tol.step;
            let down = eval(&work)?;
            work[k][[r, c]] = x0;
            let numeric = (up - down) / (2.0 * tol.step);
            let a = analytic[k][[r, c]];
            let abs = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            report.checked += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if abs > tol.abs {
                report.max_rel_err = report.max_rel_err.max(rel);
                if rel > tol.rel {
                    report.failures += 1;
                }
            }
        }
    }
    Ok(report)
}
