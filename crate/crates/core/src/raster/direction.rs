use std::fmt;

use serde::{Deserialize, Serialize};

use super::skeleton::Segment;
use crate::error::{Error, Result};

/// Undirected line orientation in four 45° bins.
///
/// The declaration order is the canonical order used when several
/// directions are listed in one answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DirectionBin {
    #[serde(rename = "E--W")]
    EW,
    #[serde(rename = "N--S")]
    NS,
    #[serde(rename = "NW--SE")]
    NWSE,
    #[serde(rename = "NE--SW")]
    NESW,
}

impl DirectionBin {
    pub const ALL: [DirectionBin; 4] = [
        DirectionBin::EW,
        DirectionBin::NS,
        DirectionBin::NWSE,
        DirectionBin::NESW,
    ];

    /// Answer-text token.
    pub fn token(self) -> &'static str {
        match self {
            DirectionBin::EW => "E--W",
            DirectionBin::NS => "N--S",
            DirectionBin::NWSE => "NW--SE",
            DirectionBin::NESW => "NE--SW",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        DirectionBin::ALL.into_iter().find(|d| d.token() == token)
    }
}

impl fmt::Display for DirectionBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Bins a geographic angle in degrees, counter-clockwise from east.
/// Any real angle is folded into `[0, 180)` first.
pub fn classify_angle(theta_deg: f64) -> DirectionBin {
    let mut t = theta_deg.rem_euclid(180.0);
    if t >= 180.0 {
        t = 0.0;
    }
    if t < 22.5 || t >= 157.5 {
        DirectionBin::EW
    } else if t < 67.5 {
        DirectionBin::NESW
    } else if t < 112.5 {
        DirectionBin::NS
    } else {
        DirectionBin::NWSE
    }
}

/// Geographic angle of a segment in `[0, 180)`. Rows grow southward, so the
/// row delta is negated to get a north-up frame.
pub fn segment_angle(seg: &Segment) -> Result<f64> {
    let mut east = seg.end.1 - seg.start.1;
    let mut north = -(seg.end.0 - seg.start.0);
    if east == 0.0 && north == 0.0 {
        return Err(Error::ZeroLengthSegment);
    }
    // Lines are undirected: orient every segment into the eastern half-plane.
    if east < 0.0 || (east == 0.0 && north < 0.0) {
        east = -east;
        north = -north;
    }
    let t = north.atan2(east).to_degrees().rem_euclid(180.0);
    Ok(if t >= 180.0 { 0.0 } else { t })
}

pub fn classify_direction(seg: &Segment) -> Result<DirectionBin> {
    Ok(classify_angle(segment_angle(seg)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(start: (f64, f64), end: (f64, f64)) -> Segment {
        Segment {
            start,
            end,
            length_m: 1.0,
        }
    }

    #[test]
    fn angle_examples() {
        assert_eq!(classify_angle(10.0), DirectionBin::EW);
        assert_eq!(classify_angle(45.0), DirectionBin::NESW);
        assert_eq!(classify_angle(22.5), DirectionBin::NESW);
        assert_eq!(classify_angle(67.5), DirectionBin::NS);
        assert_eq!(classify_angle(112.5), DirectionBin::NWSE);
        assert_eq!(classify_angle(157.5), DirectionBin::EW);
        assert_eq!(classify_angle(179.999), DirectionBin::EW);
    }

    #[test]
    fn row_axis_points_south() {
        // Moving up-right on screen is moving north-east on the ground.
        let s = seg((10.0, 0.0), (0.0, 10.0));
        assert_eq!(classify_direction(&s).unwrap(), DirectionBin::NESW);
        let s = seg((0.0, 0.0), (10.0, 10.0));
        assert_eq!(classify_direction(&s).unwrap(), DirectionBin::NWSE);
        let s = seg((0.0, 0.0), (10.0, 0.0));
        assert_eq!(classify_direction(&s).unwrap(), DirectionBin::NS);
    }

    #[test]
    fn zero_length_is_an_error() {
        assert!(classify_direction(&seg((1.0, 1.0), (1.0, 1.0))).is_err());
    }

    proptest! {
        #[test]
        fn undirected(theta in 0.0f64..360.0) {
            prop_assert_eq!(classify_angle(theta), classify_angle((theta + 180.0) % 360.0));
        }

        #[test]
        fn endpoint_order_is_irrelevant(
            a in (-50.0f64..50.0, -50.0f64..50.0),
            b in (-50.0f64..50.0, -50.0f64..50.0),
        ) {
            prop_assume!(a != b);
            prop_assert_eq!(
                classify_direction(&seg(a, b)).unwrap(),
                classify_direction(&seg(b, a)).unwrap()
            );
        }
    }
}
