//! Reference pipelines: node-only condensation at full feature width, and
//! PCA composed with node-only condensation in either order.

mod pca;

pub use pca::{pca_fit, pca_transform, PcaModel, PCA_ITERS};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::condense::{
    condensation_graph, condense_with, condensed_sizes, CondenseOutput, CondenserConfig,
};
use crate::error::{Error, Result};
use crate::graph_io::{centralize_features, Graph};
use crate::models::Encoder;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Node condensation with identity features.
    NodeOnly,
    /// PCA on the original features, then node condensation.
    PcaFirst,
    /// Node condensation, then PCA on the condensed features.
    PcaAfter,
}

impl Baseline {
    pub fn name(self) -> &'static str {
        match self {
            Baseline::NodeOnly => "node-only",
            Baseline::PcaFirst => "pca-first",
            Baseline::PcaAfter => "pca-after",
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Baseline::NodeOnly, Baseline::PcaFirst, Baseline::PcaAfter]
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    FeaturesFirst,
    NodesFirst,
}

/// Condensation with the identity feature map; `r_d` is ignored.
pub fn node_only_condense(graph: &Graph, config: &CondenserConfig) -> Result<CondenseOutput> {
    condense_with(graph, config, Encoder::identity(graph.num_features))
}

/// Structure-agnostic two-stage pipeline. The PCA map acts on centralized
/// features and becomes the (fixed) feature condenser of the output.
pub fn two_stage_condense(
    graph: &Graph,
    config: &CondenserConfig,
    order: Order,
) -> Result<(CondenseOutput, PcaModel)> {
    let (_, d) = condensed_sizes(graph, config);
    let pca_seed = rng::derive_seed(config.seed, "pca");
    match order {
        Order::FeaturesFirst => {
            let g = condensation_graph(graph);
            let train = centralize_features(&g.features).select(ndarray::Axis(0), &g.train_idx);
            let model = pca_fit(&train, d, PCA_ITERS, pca_seed)?;
            let out = condense_with(graph, config, model.encoder()?)?;
            Ok((out, model))
        }
        Order::NodesFirst => {
            let mut out = node_only_condense(graph, config)?;
            let model = pca_fit(&out.condensed.x_hat, d, PCA_ITERS, pca_seed)?;
            out.condensed.x_hat = pca_transform(&model, &out.condensed.x_hat)?;
            out.phi = model.encoder()?;
            Ok((out, model))
        }
    }
}

pub fn run_baseline(
    graph: &Graph,
    config: &CondenserConfig,
    which: Baseline,
) -> Result<CondenseOutput> {
    match which {
        Baseline::NodeOnly => node_only_condense(graph, config),
        Baseline::PcaFirst => two_stage_condense(graph, config, Order::FeaturesFirst).map(|r| r.0),
        Baseline::PcaAfter => two_stage_condense(graph, config, Order::NodesFirst).map(|r| r.0),
    }
}
