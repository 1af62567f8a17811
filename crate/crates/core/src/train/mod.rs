//! Bin sampling, the training objective and the optimization loop.

pub mod loss;
pub mod sample;
pub mod trainer;

pub use loss::{loss_m, loss_oc, loss_p, loss_rt, total_loss, LossBreakdown, LossWeights};
pub use sample::{sample_bins, SampleBatch};
pub use trainer::{
    objective, read_loss_log, resume, train, LogRow, TrainConfig, TrainOutcome, CHECKPOINT_DIR, LOSS_LOG, NONFINITE_DUMP,
    TRAIN_CONFIG,
};
