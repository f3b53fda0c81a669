//! Bidirectional LSTM with multi-head attention pooling, trained from scratch
//! in double precision.

mod network;
mod optim;
mod params;
mod train;

pub use network::{backward, cross_entropy_loss, forward, loss_and_gradients, ForwardOutput, PROB_FLOOR};
pub use optim::{adamw_step, clip_global_norm, AdamState, PlateauScheduler, TrainConfig};
pub use params::{AttentionHead, CheckpointEntry, ClassifierConfig, LstmDirection, ModelParams, TensorView};
pub use train::{fit, fit_from, predict, EpochRecord, FitOutcome, Prediction, StopReason};
