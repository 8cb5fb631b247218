//! Convolutional token-sequence classifier with hand-written backpropagation.

mod adam;
mod checkpoint;
mod gradcheck;
mod hyper;
mod model;
mod pass;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{checkpoint_from_json, checkpoint_to_json, FORMAT_VERSION};
pub use gradcheck::{gradient_check, GradCheck, FD_STEP};
pub use hyper::{Hyperparams, HYPER_KEYS};
pub use model::{Batch, Model, Params, BN_EPS, BN_MOMENTUM, EMBED_ROWS, MIN_SEQ_LEN, PARAM_NAMES};
pub use pass::{
    backward, forward, logit_gradient, softmax2, update_running_stats, weighted_cross_entropy,
    Cache, Forward, Mode,
};
pub use train::{
    balanced_class_weight, extract_features, history_jsonl, infer, train, EpochRecord, Example,
    Inference, TrainOutcome, SELECTION_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("malformed batch: {0}")]
    Shape(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparam(String),
    #[error("unknown key {key:?}; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("backward needs a batch-statistics forward pass")]
    EvalCache,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
