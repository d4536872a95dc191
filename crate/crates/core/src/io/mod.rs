//! Files on disk: masks as PNG, configs and manifests as JSON, corpora as
//! JSON lines; plus the synthetic scene generator.

pub mod config;
pub mod files;
pub mod manifest;
pub mod png;
pub mod synth;

pub use config::{AugmentFlags, OutputPaths, RunConfig, SEED_ENV};
pub use files::{read_json, read_jsonl, to_jsonl, write_atomic, write_json, write_jsonl};
pub use manifest::{DatasetManifest, ManifestEntry, Split};
pub use png::{mask_png_bytes, read_image_png, read_mask_png, write_image_png, write_mask_png};
pub use synth::{gen_synthetic_masks, gen_synthetic_scene, Inventory, RoadLayout, SynthScene, SynthSpec};
