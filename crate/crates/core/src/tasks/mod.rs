//! Associative-recall data generation, the trainable model, training, and
//! evaluation.

pub mod data;
pub mod eval;
pub mod fused;
pub mod model;
pub mod train;

pub use data::{generate_ar_dataset, verify_example, ARConfig, ARDataset, ARExample};
pub use eval::{evaluate_ar, EvalRow, EvalTable};
pub use model::{ModelConfig, ModelRun, TinyModel};
pub use train::{train, EpochMetrics, TrainConfig};
