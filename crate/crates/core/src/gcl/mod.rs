//! Graph contrastive learning: encoder, augmentations, objectives and training.

mod augment;
mod checkpoint;
mod embedding;
mod encoder;
mod gradcheck;
mod loss;
mod params;
pub mod tensor;
mod train;

pub use augment::{drop_nodes, drop_nodes_with, perturb_edges, perturb_edges_with, relation_alphabet, AugmentConfig, View};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use embedding::{embed_formula, EmbedMode, FormulaEmbedding, Provenance};
pub use encoder::{backward, encode, forward, node_features, readout_backward, EncoderCache, GraphInput};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{bgrl_loss, graphcl_loss, infograph_loss, mlp_backward, mlp_forward, InfoGraphOut, MlpCache};
pub use params::{ema_update, Adam, Encoder, EncoderParams, Mlp, Objective};
pub use tensor::Mat;
pub use train::{batch_loss, make_batch, train, Batch, StepOutput, TrainConfig, TrainCounters, TrainOutcome, ViewPair};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GclError {
    #[error("{what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("batch of {size} graph(s) is too small; this objective needs at least {needed}")]
    BatchTooSmall { size: usize, needed: usize },
    #[error("augmented views share no nodes")]
    NoSharedNodes,
    #[error("tensor {tensor} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { tensor: String, expected: (usize, usize), found: (usize, usize) },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("parameters lack the {0} this objective needs")]
    MissingHead(&'static str),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
}
