//! Intent-aware mobility toolkit: stay-record handling, synthetic data,
//! heuristic and LLM-driven intent annotation, fine-tune export, intent
//! kernels and evaluation metrics.

pub mod a2i;
pub mod annotator;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod finetune;
pub mod intent;
pub mod intentprob;
pub mod literal;
pub mod synthgen;

pub use error::{Error, ResponseParseError, Result};
pub use intent::{Intent, NUM_INTENTS};
