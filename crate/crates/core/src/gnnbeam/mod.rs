//! Graph-neural-network beamforming: interference graphs, a three-round
//! max-aggregation message-passing network, decoding of its per-link
//! readout into activation and beamwidth, and unsupervised training on
//! negative sum capacity.

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::nncore::NnError;
use crate::rfmodel::RfError;

mod eval;
mod graph;
mod model;
mod objective;
mod train;

pub use eval::{
    evaluate, gnn_infer, median, wmmse_capacity, EvalConfig, EvalReport, EvalRow, Method,
    EVAL_CSV_HEADER,
};
pub use graph::{
    build_graph, Edge, FeatureNorm, GraphConfig, InterferenceGraph, EDGE_FEATURES, VERTEX_FEATURES,
};
pub use model::{GnnLayer, GnnModel, EMBED, LAYERS, READOUT_HIDDEN};
pub use objective::{
    decode_decision, decode_width, relaxed_loss, relaxed_width_deg, sigmoid, SOFT_CONE_TEMPERATURE,
};
pub use train::{
    model_loss, train, write_loss_csv, FixedInstance, InstanceSource, RoadInstanceGenerator,
    TrainConfig, TrainOutcome, LOSS_CSV_HEADER, NORM_FIT_INSTANCES,
};

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape error: {0}")]
    Shape(&'static str),
    #[error("instance has no links")]
    EmptyInstance,
    #[error("non-finite loss")]
    NonFiniteLoss,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, trace: Vec<f64> },
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Rf(#[from] RfError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}
