//! Self-attention encoders, additive fusion, regression head, hand-derived
//! gradients, Adam and the grid-search training loop.

mod adam;
mod checkpoint;
mod encoder;
mod network;
mod ops;
mod params;
mod train;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use encoder::{encode_pooled, mhsa_forward};
pub use network::{
    fuse, loss, loss_and_grad, loss_and_grad_into, predict, predict_batch, CallInput, FusionTerms,
};
pub use ops::{
    attention, attention_weights, layer_norm, masked_average_pool, masked_softmax, LN_EPS,
};
pub use params::{
    BlockParams, EncoderParams, FusionParams, HeadParams, MhsaConfig, ModelConfig, ModelParams,
    FUSED_DIM, HEAD_HIDDEN,
};
pub use train::{
    fit, fit_until, read_history, train, write_history, CellOutcome, EpochLoss, FitOptions,
    HistorySplit, Sample, TrainConfig, TrainOutcome, TrainedModel, BATCH_SIZES, LEARNING_RATES,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("every row is masked")]
    AllMasked,
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite value in {path}")]
    NonFinite { path: String },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("no sample to train on: {0}")]
    NoData(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error("every grid cell failed")]
    AllCellsFailed,
    #[error("history csv: {0}")]
    History(String),
}
