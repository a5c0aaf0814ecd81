//! Regression and least-squares adversarial training of enhancers: losses,
//! learning-rate schedule, batching, both trainers and the run driver.

mod batch;
mod data;
mod gan;
mod log;
mod losses;
mod mse;
mod runner;
mod schedule;

pub use batch::{frame_batches, spliced_frames, BatchStream, Clock, UttBatch};
pub use data::{Example, FeatureCorpus, RawCorpus, UtteranceFeatures};
pub use gan::{gan_train_iteration, GLoss, GanState, GanTrainerConfig};
pub use log::{EpochRecord, IterRecord, LogEntry, TrainLog};
pub use losses::{d_loss, d_loss_batch, g_adv_batch, g_loss, g_loss_from, mse_loss};
pub use mse::{MseTrainer, MseTrainerConfig};
pub use runner::{dev_mse, train, train_manifest, TrainOutcome, CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE, STATUS_FILE};
pub use schedule::{LrSchedule, DEFAULT_FINAL_RATIO};
