//! Land-cover VQA toolkit: rule-based question generation from semantic
//! masks, answer-consistent augmentation, a counting-aware loss, a desk-scale
//! vision-language model, and the evaluation metrics.

pub mod augment;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod qa;
pub mod raster;

pub use error::{Error, Result};
