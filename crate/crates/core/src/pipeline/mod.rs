//! Training, evaluation and inference on top of the networks.

mod checkpoint;
mod config;
mod evaluate;
mod forward;
mod infer;
mod optim;
mod train;

pub use checkpoint::Checkpoint;
pub use config::{Ablation, Config};
pub use evaluate::{
    evaluate, evaluate_samples, predict, EvalOptions, EvalReport, EvalRow, Method, Prediction,
    AGGREGATE,
};
pub use forward::{forward, splat_factor, BoundModel, Inputs, Outputs};
pub use infer::{confidence_path, encode_confidence, infer, InferOutput, InferRequest};
pub use optim::Adam;
pub use train::{
    epoch_checkpoint_path, final_checkpoint_path, load_split, sample_losses, train,
    train_log_path, train_samples, EpochLog, LossTerms, LossValues, TrainReport, LOG_HEADER,
};
