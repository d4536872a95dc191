use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel value reserved for "no label".
pub const IGNORE: u8 = 255;

/// Default ground sampling distance of the imagery, meters per pixel.
pub const DEFAULT_RESOLUTION_M: f64 = 0.3;

/// Number of land-cover classes.
pub const NUM_CLASSES: usize = 8;

/// `(row, col)` index into a mask.
pub type Pixel = (usize, usize);

/// The eight land-cover categories, encoded by their pixel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum LandCover {
    Background = 0,
    Building = 1,
    Road = 2,
    Water = 3,
    Barren = 4,
    Forest = 5,
    Agriculture = 6,
    Playground = 7,
}

impl LandCover {
    pub const ALL: [LandCover; NUM_CLASSES] = [
        LandCover::Background,
        LandCover::Building,
        LandCover::Road,
        LandCover::Water,
        LandCover::Barren,
        LandCover::Forest,
        LandCover::Agriculture,
        LandCover::Playground,
    ];

    pub fn from_id(id: u8) -> Result<Self> {
        LandCover::ALL
            .get(id as usize)
            .copied()
            .ok_or(Error::UnknownClass(id))
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            LandCover::Background => "background",
            LandCover::Building => "building",
            LandCover::Road => "road",
            LandCover::Water => "water",
            LandCover::Barren => "barren",
            LandCover::Forest => "forest",
            LandCover::Agriculture => "agriculture",
            LandCover::Playground => "playground",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        LandCover::ALL
            .iter()
            .copied()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::invalid("class", format!("unknown class name {name:?}")))
    }
}

impl fmt::Display for LandCover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A land-cover label grid at a fixed ground resolution.
#[derive(Clone, PartialEq)]
pub struct SemanticMask {
    height: usize,
    width: usize,
    cells: Vec<u8>,
    resolution_m: f64,
}

impl fmt::Debug for SemanticMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemanticMask")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("resolution_m", &self.resolution_m)
            .finish_non_exhaustive()
    }
}

impl SemanticMask {
    /// Builds a mask from row-major cells, validating every value.
    pub fn new(height: usize, width: usize, cells: Vec<u8>, resolution_m: f64) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyMask);
        }
        if cells.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                got: cells.len(),
            });
        }
        if !(resolution_m.is_finite() && resolution_m > 0.0) {
            return Err(Error::invalid("resolution_m", "must be finite and positive"));
        }
        if let Some(&bad) = cells
            .iter()
            .find(|&&v| v != IGNORE && v as usize >= NUM_CLASSES)
        {
            return Err(Error::InvalidMask(format!("cell value {bad} is not a class id")));
        }
        Ok(Self {
            height,
            width,
            cells,
            resolution_m,
        })
    }

    /// All-background mask.
    pub fn filled(height: usize, width: usize, class: LandCover, resolution_m: f64) -> Result<Self> {
        Self::new(height, width, vec![class.id(); height * width], resolution_m)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn resolution_m(&self) -> f64 {
        self.resolution_m
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// Writes a value; the caller guarantees it is a class id or [`IGNORE`].
    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value == IGNORE || (value as usize) < NUM_CLASSES);
        self.cells[row * self.width + col] = value;
    }

    pub fn in_bounds(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }

    /// Fills the axis-aligned rectangle `[r0, r1) x [c0, c1)`, clipped to the grid.
    pub fn fill_rect(&mut self, r0: usize, c0: usize, r1: usize, c1: usize, class: LandCover) {
        for r in r0.min(self.height)..r1.min(self.height) {
            for c in c0.min(self.width)..c1.min(self.width) {
                self.set(r, c, class.id());
            }
        }
    }

    /// Pixel count per class id; ignore cells are not counted.
    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut hist = [0usize; NUM_CLASSES];
        for &v in &self.cells {
            if v != IGNORE {
                hist[v as usize] += 1;
            }
        }
        hist
    }

    pub fn labeled_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v != IGNORE).count()
    }
}

/// Fraction of labeled cells that belong to `class`.
pub fn area_fraction(mask: &SemanticMask, class: LandCover) -> Result<f64> {
    let (count, total) = class_count(mask, class)?;
    Ok(count as f64 / total as f64)
}

/// `(cells of class, labeled cells)`, erroring when nothing is labeled.
pub fn class_count(mask: &SemanticMask, class: LandCover) -> Result<(usize, usize)> {
    let total = mask.labeled_count();
    if total == 0 {
        return Err(Error::AllIgnored);
    }
    let count = mask.cells().iter().filter(|&&v| v == class.id()).count();
    Ok((count, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_cells() {
        assert!(matches!(
            SemanticMask::new(1, 2, vec![0, 9], 0.3),
            Err(Error::InvalidMask(_))
        ));
        assert!(matches!(SemanticMask::new(0, 2, vec![], 0.3), Err(Error::EmptyMask)));
        assert!(SemanticMask::new(1, 2, vec![0, IGNORE], 0.3).is_ok());
        assert!(SemanticMask::new(1, 1, vec![0], 0.0).is_err());
    }

    #[test]
    fn class_ids_round_trip() {
        for c in LandCover::ALL {
            assert_eq!(LandCover::from_id(c.id()).unwrap(), c);
            assert_eq!(LandCover::from_name(c.name()).unwrap(), c);
        }
        assert!(LandCover::from_id(8).is_err());
    }

    #[test]
    fn area_fraction_examples() {
        let mut m = SemanticMask::filled(10, 10, LandCover::Background, 0.3).unwrap();
        m.fill_rect(0, 0, 1, 10, LandCover::Water);
        m.fill_rect(1, 0, 2, 5, LandCover::Water);
        assert_eq!(area_fraction(&m, LandCover::Water).unwrap(), 0.15);
        assert_eq!(area_fraction(&m, LandCover::Playground).unwrap(), 0.0);
        let full = SemanticMask::filled(4, 4, LandCover::Forest, 0.3).unwrap();
        assert_eq!(area_fraction(&full, LandCover::Forest).unwrap(), 1.0);
        let ignored = SemanticMask::new(2, 2, vec![IGNORE; 4], 0.3).unwrap();
        assert!(matches!(
            area_fraction(&ignored, LandCover::Water),
            Err(Error::AllIgnored)
        ));
    }

    #[test]
    fn ignore_cells_are_excluded_from_the_denominator() {
        let m = SemanticMask::new(1, 4, vec![3, 3, IGNORE, 0], 0.3).unwrap();
        assert!((area_fraction(&m, LandCover::Water).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
