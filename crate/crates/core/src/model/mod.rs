//! Patch transformer classifier and its training stack.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod params;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, TrainConfig};
pub use loss::{cross_entropy, focal_loss, focal_loss_grad, softmax};
pub use metrics::{ClassMetrics, EvalReport};
pub use network::{backward, encoder_forward, forward, positional_encoding, project_patches, DropoutMasks, Forward};
pub use optim::{adam_step, cosine_lr, AdamState};
pub use params::{BlockParams, ModelParams};
pub use train::{
    classify, evaluate, fine_tune, log_csv, lopo_evaluate, param_gradients, predict, train_model, EpochRecord,
    FoldReport, LopoMode, LopoReport, TrainOutcome,
};
