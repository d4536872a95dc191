//! Desk-scale vision-language model with mask guidance and a separated
//! numerical estimator.

pub mod config;
pub mod encoder;
pub mod layers;
pub mod net;
pub mod params;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use config::{ModelConfig, TrainConfig};
pub use encoder::Image;
pub use net::{EarthVlNet, FeatureMap, GuidedFeatures, Prepared, Sample, StepLosses};
pub use tokenizer::{fill, mask_numbers, AnswerTemplate, Vocab};
pub use train::{count_rmse, counting_samples, train, vocab_for, Checkpoint, CountingTask, StepLog};
