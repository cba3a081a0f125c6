//! Losses, update rules and training loops.

pub mod checkpoint;
pub mod config;
pub mod losses;
pub mod step;
pub mod trainer;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint,
};
pub use config::{Strategy, TrainConfig};
pub use losses::{domain_loss, label_loss, mmd_loss};
pub use step::{
    dat_gradients, dat_step, mmd_step, supervised_step, Batch, GradientPaths, StepLosses,
};
pub use trainer::{
    evaluate, recalibrate_batch_norms, train, EpochRecord, Monitor, TrainData, TrainOutcome,
    TrainingLog,
};
