use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{Gradients, Matrix, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Feature condenser.
    Phi,
    /// Link generator.
    Psi,
    /// Matching backbone.
    Theta,
    /// Evaluation model.
    Eval,
    /// Free condensed features.
    Features,
}

/// Named trainable matrices in insertion order. Names are unique and shapes
/// never change after insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    role: Role,
    entries: Vec<(String, Matrix)>,
}

impl ParamSet {
    pub fn new(role: Role) -> Self {
        ParamSet {
            role,
            entries: Vec::new(),
        }
    }

    /// Glorot-uniform initialization. Each matrix draws from its own stream
    /// keyed by `seed` and its name.
    pub fn glorot(role: Role, seed: u64, shapes: &[(&str, usize, usize)]) -> Self {
        let mut set = ParamSet::new(role);
        for &(name, rows, cols) in shapes {
            set.insert(name, glorot_uniform(seed, name, rows, cols))
                .expect("shape table has unique names");
        }
        set
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn insert(&mut self, name: &str, value: Matrix) -> Result<()> {
        if self.get(name).is_some() {
            return Err(Error::Invariant(format!("duplicate parameter name {name}")));
        }
        self.entries.push((name.to_string(), value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn expect(&self, name: &str) -> Result<&Matrix> {
        self.get(name)
            .ok_or_else(|| Error::Invariant(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Records every matrix on `tape`, trainable or not.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let vars = self
            .entries
            .iter()
            .map(|(n, m)| {
                let v = tape.leaf(std::sync::Arc::new(m.clone()), trainable);
                (n.clone(), v)
            })
            .collect();
        ParamVars { vars }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (name, m) in &self.entries {
            map.insert(name.clone(), matrix_to_json(m));
        }
        serde_json::Value::Object(map)
    }

    pub fn from_json(role: Role, value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::invalid("params.json", "expected an object"))?;
        let mut set = ParamSet::new(role);
        for (name, v) in obj {
            set.insert(name, matrix_from_json(name, v)?)?;
        }
        Ok(set)
    }
}

pub(crate) fn matrix_to_json(m: &Matrix) -> serde_json::Value {
    let data: Vec<f64> = m.iter().copied().collect();
    serde_json::json!({ "rows": m.nrows(), "cols": m.ncols(), "data": data })
}

pub(crate) fn matrix_from_json(name: &str, v: &serde_json::Value) -> Result<Matrix> {
    #[derive(Deserialize)]
    struct Raw {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    }
    let raw: Raw = serde_json::from_value(v.clone())
        .map_err(|e| Error::invalid("params.json", format!("{name}: {e}")))?;
    Matrix::from_shape_vec((raw.rows, raw.cols), raw.data)
        .map_err(|e| Error::invalid("params.json", format!("{name}: {e}")))
}

pub fn glorot_uniform(seed: u64, name: &str, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let mut r = rng::stream(seed, &format!("glorot/{name}"));
    Matrix::from_shape_simple_fn((rows, cols), || r.random_range(-bound..bound))
}

/// Tape handles for a registered [`ParamSet`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    vars: Vec<(String, Var)>,
}

impl ParamVars {
    /// Handles for matrices recorded some other way, e.g. by a gradient check.
    pub fn from_pairs(vars: Vec<(String, Var)>) -> Self {
        ParamVars { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Invariant(format!("missing parameter {name}")))
    }

    /// Pulls this set's gradients out of a finished backward pass.
    pub fn grads(&self, grads: &mut Gradients) -> ParamGrads {
        let mut out = BTreeMap::new();
        for (name, v) in &self.vars {
            if let Some(g) = grads.take(*v) {
                out.insert(name.clone(), g);
            }
        }
        ParamGrads(out)
    }
}

/// Gradients keyed by parameter name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrads(pub BTreeMap<String, Matrix>);

impl ParamGrads {
    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.0.get(name)
    }
}
