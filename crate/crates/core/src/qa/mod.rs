//! Rule-based question/answer generation from semantic masks.

pub mod config;
pub mod pair;
pub mod rules;
pub mod templates;

pub use config::{RoadTag, RuleThresholds, SceneMeta};
pub use pair::{extract_numbers, QAPair, QType};
pub use rules::{
    area_bin, compute_lai, detect_intersections, detect_village, generate_qa, is_near, Lai, Scene,
    School, Village,
};
