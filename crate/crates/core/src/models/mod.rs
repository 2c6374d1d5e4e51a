//! Models: the SGC matching backbone, feature condensers, the link
//! generator, and the trainers used for evaluation.

mod encoder;
mod link;
mod params;
mod sgc;
mod train;

pub use encoder::{gat_layer_dense, Encoder, EncoderGraph, EncoderKind, EncoderSpec, GAT_SLOPE};
pub use link::{
    build_adjacency, build_adjacency_on_tape, init_link_generator, normalize_on_tape, LINK_HIDDEN,
};
pub use params::{glorot_uniform, ParamGrads, ParamSet, ParamVars, Role};
pub use sgc::{sgc_forward, sgc_loss_and_grads, sgc_loss_grads, SgcBackbone};
pub use train::{accuracy, train_eval_model, Arch, GraphView, TrainHyper, TrainOutcome};
