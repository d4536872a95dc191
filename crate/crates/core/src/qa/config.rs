use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{CenterlineParams, DEFAULT_MIN_PIXELS};

/// Thresholds used by the annotation rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleThresholds {
    /// Two objects are "near" at or below this distance.
    pub near_m: f64,
    /// A building cluster of at least this many members is a residential area.
    pub village_min_buildings: usize,
    /// Vegetation fraction below which a residential area needs planting.
    pub lai_threshold: f64,
    /// Buildings whose boundaries are this close join the same cluster.
    pub compact_dist_m: f64,
    /// Adjacency distance (building-playground schools, trees along roads).
    pub school_adjacency_m: f64,
    /// Components smaller than this are treated as annotation noise.
    pub min_pixels: usize,
    pub centerline: CenterlineParams,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            near_m: 100.0,
            village_min_buildings: 21,
            lai_threshold: 0.30,
            compact_dist_m: 20.0,
            school_adjacency_m: 10.0,
            min_pixels: DEFAULT_MIN_PIXELS,
            centerline: CenterlineParams::default(),
        }
    }
}

impl RuleThresholds {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("near_m", self.near_m),
            ("lai_threshold", self.lai_threshold),
            ("compact_dist_m", self.compact_dist_m),
            ("school_adjacency_m", self.school_adjacency_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("thresholds.{name} must be positive, got {v}")));
            }
        }
        if self.village_min_buildings == 0 || self.min_pixels == 0 {
            return Err(Error::Config(
                "thresholds.village_min_buildings and thresholds.min_pixels must be positive".into(),
            ));
        }
        if self.lai_threshold > 1.0 {
            return Err(Error::Config("thresholds.lai_threshold must be at most 1".into()));
        }
        Ok(())
    }
}

/// OSM-style road category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RoadTag {
    #[default]
    Main,
    Residential,
    Track,
    Cycleway,
    Other,
}

/// Optional per-scene annotations that masks cannot express.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneMeta {
    /// Tag per road component, indexed like `connected_components(mask, Road, ..)`.
    /// Roads beyond the end of the list are treated as main roads.
    pub road_tags: Vec<RoadTag>,
    /// Socioeconomic land-use labels present in the scene.
    pub land_use: Vec<String>,
}

impl SceneMeta {
    pub fn road_tag(&self, index: usize) -> RoadTag {
        self.road_tags.get(index).copied().unwrap_or_default()
    }

    pub fn validate(&self, road_count: usize) -> Result<()> {
        if self.road_tags.len() > road_count {
            return Err(Error::invalid(
                "meta.road_tags",
                format!(
                    "{} tags given but the mask has {road_count} road objects",
                    self.road_tags.len()
                ),
            ));
        }
        Ok(())
    }
}
