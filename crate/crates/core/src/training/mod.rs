//! Loss, optimizer, training loop, gradient check, and checkpoints.

mod adam;
mod checkpoint;
mod dataset;
mod gradcheck;
mod loss;
mod train;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, OptimizerState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{load_scenes, synthetic_scenes, TrainScene};
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR, GRAD_CHECK_MIN_ENTRIES, GRAD_CHECK_STEP};
pub use loss::{si_sdr_loss, si_sdr_loss_grad, LOSS_EPS};
pub use train::{train, EpochLog, TrainOptions, TrainOutcome};
