use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::EncoderKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    /// Match at every epoch.
    Full,
    /// Match only at the first epoch of each restart.
    OneStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureMode {
    /// Adjacency produced by the link generator.
    Learned,
    /// Fixed identity adjacency; only features are learned.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Every knob of the condensation loop. Each field is optional in JSON and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondenserConfig {
    /// Node ratio.
    pub r_n: f64,
    /// Feature ratio.
    pub r_d: f64,
    /// Outer restarts.
    #[serde(rename = "K")]
    pub restarts: usize,
    /// Epochs per restart.
    #[serde(rename = "T")]
    pub epochs: usize,
    pub t1: usize,
    pub t2: usize,
    /// Inner backbone steps per epoch.
    #[serde(rename = "J")]
    pub inner_steps: usize,
    /// Inner backbone learning rate.
    pub eta: f64,
    /// Feature condenser learning rate.
    pub eta1: f64,
    /// Link generator learning rate.
    pub eta2: f64,
    /// Condensed feature learning rate.
    pub eta3: f64,
    pub gamma: f64,
    /// Per-class original-graph batch; -1 uses the whole class.
    pub batch_size: i64,
    pub condenser_variant: EncoderKind,
    pub condenser_hidden: usize,
    pub link_hidden: usize,
    pub sgc_hops: usize,
    pub sgc_hidden: usize,
    pub matching_mode: MatchingMode,
    pub structure_mode: StructureMode,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for CondenserConfig {
    fn default() -> Self {
        CondenserConfig {
            r_n: 0.05,
            r_d: 0.25,
            restarts: 10,
            epochs: 60,
            t1: 20,
            t2: 15,
            inner_steps: 10,
            eta: 0.01,
            eta1: 1e-4,
            eta2: 1e-2,
            eta3: 1e-2,
            gamma: 0.05,
            batch_size: -1,
            condenser_variant: EncoderKind::Gat,
            condenser_hidden: 128,
            link_hidden: 128,
            sgc_hops: 2,
            sgc_hidden: 256,
            matching_mode: MatchingMode::Full,
            structure_mode: StructureMode::Learned,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl CondenserConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: CondenserConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let frac = |x: f64| x > 0.0 && x <= 1.0;
        if !frac(self.r_n) {
            return bad(format!("r_n must be in (0,1], got {}", self.r_n));
        }
        if !frac(self.r_d) {
            return bad(format!("r_d must be in (0,1], got {}", self.r_d));
        }
        if self.t1 == 0 || self.t2 == 0 {
            return bad("t1 and t2 must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0,1), got {}", self.gamma));
        }
        for (name, lr) in [
            ("eta", self.eta),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
        ] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be finite and nonnegative, got {lr}"));
            }
        }
        if self.batch_size == 0 || self.batch_size < -1 {
            return bad(format!(
                "batch_size must be -1 or positive, got {}",
                self.batch_size
            ));
        }
        if self.condenser_hidden == 0 || self.link_hidden == 0 || self.sgc_hidden == 0 {
            return bad("hidden widths must be positive".into());
        }
        if self.sgc_hops == 0 {
            return bad("sgc_hops must be at least 1".into());
        }
        if matches!(
            self.condenser_variant,
            EncoderKind::Identity | EncoderKind::Projection
        ) {
            return bad(format!(
                "condenser_variant {} is reserved for the baselines",
                self.condenser_variant
            ));
        }
        Ok(())
    }
}
