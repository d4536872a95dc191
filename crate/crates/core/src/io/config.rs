//! Run configuration: one JSON file, unknown keys rejected, validated before use.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::files::read_to_string;
use crate::augment::TransformKind;
use crate::error::{Error, Result};
use crate::loss::NDLossConfig;
use crate::model::{ModelConfig, TrainConfig};
use crate::qa::RuleThresholds;
use crate::raster::DEFAULT_RESOLUTION_M;

pub const SEED_ENV: &str = "EARTHVL_SEED";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentFlags {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: bool,
}

impl AugmentFlags {
    /// Enabled transforms in the fixed order hflip, vflip, rot90.
    pub fn kinds(&self) -> Vec<TransformKind> {
        [(self.hflip, TransformKind::HFlip), (self.vflip, TransformKind::VFlip), (self.rot90, TransformKind::Rot90Cw)]
            .into_iter()
            .filter_map(|(on, k)| on.then_some(k))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Ground size of one mask pixel.
    pub resolution_m: f64,
    pub thresholds: RuleThresholds,
    pub loss: NDLossConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub augment: AugmentFlags,
    pub outputs: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            resolution_m: DEFAULT_RESOLUTION_M,
            thresholds: RuleThresholds::default(),
            loss: NDLossConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            augment: AugmentFlags::default(),
            outputs: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (defaults when `None`), then applies the seed override
    /// from the environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_json(&read_to_string(p)?)?,
            None => Self::default(),
        };
        cfg.apply_env(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, seed: Option<&str>) -> Result<()> {
        if let Some(s) = seed {
            self.seed = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_m.is_finite() && self.resolution_m > 0.0) {
            return Err(Error::Config("resolution_m must be positive".into()));
        }
        self.thresholds.validate()?;
        self.loss.validate().map_err(|e| Error::Config(format!("loss: {e}")))?;
        self.model.validate()?;
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), c);
        assert_eq!(RunConfig::from_json("{}").unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(RunConfig::from_json(r#"{"sed": 3}"#).is_err());
        assert!(RunConfig::from_json(r#"{"loss": {"alpha": -1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"model": {"dec_dim": 10, "dec_heads": 4}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"thresholds": {"near_m": 0}}"#).is_err());
    }

    #[test]
    fn env_seed_override() {
        let mut c = RunConfig::default();
        c.apply_env(Some("42")).unwrap();
        assert_eq!(c.seed, 42);
        assert!(c.apply_env(Some("x")).is_err());
        c.apply_env(None).unwrap();
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn augment_order_is_fixed() {
        let f = AugmentFlags { hflip: true, vflip: false, rot90: true };
        assert_eq!(f.kinds(), vec![TransformKind::HFlip, TransformKind::Rot90Cw]);
    }
}
