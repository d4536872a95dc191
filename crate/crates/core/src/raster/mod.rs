//! Geometry over land-cover masks.

pub mod components;
pub mod direction;
pub mod distance;
pub mod mask;
pub mod skeleton;

pub use components::{connected_components, GeoObject, Ring, DEFAULT_MIN_PIXELS};
pub use direction::{classify_angle, classify_direction, segment_angle, DirectionBin};
pub use distance::{min_distance, min_pixel_distance, point_distance};
pub use mask::{area_fraction, class_count, LandCover, Pixel, SemanticMask, DEFAULT_RESOLUTION_M, IGNORE, NUM_CLASSES};
pub use skeleton::{centerline_segments, road_graph, segments_from_graph, CenterlineParams, RoadGraph, Segment};
