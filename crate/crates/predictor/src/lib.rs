//! Intent-conditioned transformer for next-POI prediction.
//!
//! Each stay becomes an input unit `(user, poi, category, next time, P)`
//! where `P` is the user's intent distribution at the time of the next
//! movement. The model fuses embeddings of those fields, runs a causal
//! transformer encoder and decodes next POI, category and time.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod optim;
pub mod train;
pub mod vocab;

pub use ablation::{run_model_ablation, ModelAblationRow};
pub use config::{IntentMode, PredictorConfig};
pub use dataset::{build_dataset, DatasetOptions, InputUnit, PredictorDataset, Sample};
pub use error::{Error, Result};
pub use model::{Batch, IntentModel, Outputs};
pub use train::{evaluate, predict_topk, train, EpochRecord, TrainedPredictor};
pub use vocab::Vocab;
