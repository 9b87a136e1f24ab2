//! Losses, optimizer, training loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod trainer;

pub use adam::{clip_grad_norm, AdamState, Moments};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointTensor, MAGIC, MOMENT_M_SUFFIX, MOMENT_V_SUFFIX,
};
pub use loss::{combined_loss, combined_loss_var, cross_entropy_loss, dice_loss, LossBreakdown};
pub use trainer::{fit, make_batch, train_epoch, train_step, EpochStats, StepRecord, TrainConfig};
