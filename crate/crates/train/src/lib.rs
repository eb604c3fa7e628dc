//! Training regimes, separator pre-training, discriminator refresh, the
//! attacker probe and evaluation.

pub mod config;
pub mod data;
mod error;
pub mod evaluate;
pub mod history;
pub mod pretrain;
pub mod probe;
pub mod schedule;
pub mod system;
pub mod trainer;

pub use config::{MaskMode, OptimizerKind, RefreshInit, Regime, TrainConfig};
pub use data::{Dataset, Example};
pub use error::{Error, Result};
pub use evaluate::{evaluate, MetricsReport};
pub use history::EpochRecord;
pub use pretrain::{pretrain_separator, separation_sdr, PretrainedSeparator};
pub use probe::{refresh_discriminator, train_attack_probe};
pub use schedule::EarlyStopping;
pub use system::{load_separator, save_separator, ModelConfig, TrainedSystem};
pub use trainer::{train, train_rdal, train_rdalm, train_supervised, GradCapture, StepStats, Trainer};
