//! Training: the two ISNN objectives, the mixed-batch SGD loop, and
//! checkpoint persistence with copyright binding.

mod checkpoint;
mod config;
mod objective;
mod run;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta};
pub use config::{LambdaMode, Method, TrainConfig};
pub use objective::{loss_label_consistent, loss_label_inconsistent, LossParts};
pub use run::{history_to_csv, train, train_isnn, train_plain, EpochStats, EvalSets, IllegalSpec, TrainOutcome};
