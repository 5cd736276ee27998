//! Training with early stopping, cross-domain adaptation and checkpoints.

mod checkpoint;
mod config;
mod early_stop;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, EpochRecord, TrainingMetadata, FORMAT_VERSION, MAGIC,
};
pub use config::{EmbeddingInit, Precision, TrainConfig};
pub use early_stop::{early_stop_update, Decision, EarlyStopState};
pub use train::{
    adapt, adapt_init, init_model, initial_embedding, train, EmbeddingSource, NoObserver, TrainObserver,
};
