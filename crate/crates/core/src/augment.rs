//! Flips and quarter turns that keep masks and direction answers in sync.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qa::{QAPair, RoadTag, SceneMeta};
use crate::raster::{connected_components, DirectionBin, LandCover, SemanticMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Mirror left-right: `(r, c) -> (r, W-1-c)`.
    HFlip,
    /// Mirror top-bottom: `(r, c) -> (H-1-r, c)`.
    VFlip,
    /// Quarter turn clockwise on screen: `(r, c) -> (c, H-1-r)`.
    Rot90Cw,
}

impl TransformKind {
    pub const ALL: [TransformKind; 3] = [TransformKind::HFlip, TransformKind::VFlip, TransformKind::Rot90Cw];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::HFlip => "hflip",
            TransformKind::VFlip => "vflip",
            TransformKind::Rot90Cw => "rot90cw",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hflip" => Ok(TransformKind::HFlip),
            "vflip" => Ok(TransformKind::VFlip),
            "rot90" | "rot90cw" => Ok(TransformKind::Rot90Cw),
            _ => Err(Error::invalid("transform", format!("unknown transform {s:?}"))),
        }
    }
}

/// An element of the symmetry group of the square, stored in normal form:
/// an optional horizontal flip followed by `rot` clockwise quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GeoTransform {
    flip: bool,
    rot: u8,
}

impl GeoTransform {
    pub const IDENTITY: GeoTransform = GeoTransform { flip: false, rot: 0 };

    pub fn hflip() -> Self {
        GeoTransform { flip: true, rot: 0 }
    }

    pub fn vflip() -> Self {
        GeoTransform { flip: true, rot: 2 }
    }

    pub fn rot90cw() -> Self {
        GeoTransform { flip: false, rot: 1 }
    }

    pub fn from_kind(kind: TransformKind) -> Self {
        match kind {
            TransformKind::HFlip => Self::hflip(),
            TransformKind::VFlip => Self::vflip(),
            TransformKind::Rot90Cw => Self::rot90cw(),
        }
    }

    /// Applies `kinds` left to right.
    pub fn from_kinds(kinds: &[TransformKind]) -> Self {
        kinds
            .iter()
            .fold(Self::IDENTITY, |acc, &k| acc.then(Self::from_kind(k)))
    }

    /// `self` first, then `next`.
    pub fn then(self, next: GeoTransform) -> GeoTransform {
        // F R = R^-1 F, so F^b R^k = R^{(-1)^b k} F^b.
        let k = if next.flip { (4 - self.rot) % 4 } else { self.rot };
        GeoTransform {
            flip: self.flip ^ next.flip,
            rot: (next.rot + k) % 4,
        }
    }

    pub fn inverse(self) -> GeoTransform {
        if self.flip {
            self
        } else {
            GeoTransform { flip: false, rot: (4 - self.rot) % 4 }
        }
    }

    /// All eight group elements.
    pub fn all() -> [GeoTransform; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = GeoTransform { flip: i >= 4, rot: (i % 4) as u8 };
        }
        out
    }

    pub fn is_identity(self) -> bool {
        self == Self::IDENTITY
    }

    pub fn swaps_axes(self) -> bool {
        self.rot % 2 == 1
    }

    /// Output grid size for an `h` x `w` input.
    pub fn output_dims(self, h: usize, w: usize) -> (usize, usize) {
        if self.swaps_axes() {
            (w, h)
        } else {
            (h, w)
        }
    }

    /// Where pixel `(r, c)` of an `h` x `w` grid lands.
    pub fn map_pixel(self, (r, c): (usize, usize), h: usize, w: usize) -> (usize, usize) {
        let (mut r, mut c, mut h) = (r, c, h);
        let mut w = w;
        if self.flip {
            c = w - 1 - c;
        }
        for _ in 0..self.rot {
            (r, c) = (c, h - 1 - r);
            (h, w) = (w, h);
        }
        (r, c)
    }

    pub fn map_direction(self, d: DirectionBin) -> DirectionBin {
        use DirectionBin::*;
        let mut d = d;
        if self.flip {
            d = match d {
                NWSE => NESW,
                NESW => NWSE,
                other => other,
            };
        }
        if self.rot % 2 == 1 {
            d = match d {
                EW => NS,
                NS => EW,
                NWSE => NESW,
                NESW => NWSE,
            };
        }
        d
    }
}

impl fmt::Display for GeoTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("identity");
        }
        let mut parts = Vec::new();
        if self.flip {
            parts.push("hflip".to_string());
        }
        if self.rot > 0 {
            parts.push(format!("rot90cw*{}", self.rot));
        }
        f.write_str(&parts.join("+"))
    }
}

pub fn transform_mask(mask: &SemanticMask, t: GeoTransform) -> SemanticMask {
    let (h, w) = (mask.height(), mask.width());
    let (oh, ow) = t.output_dims(h, w);
    let mut cells = vec![0u8; h * w];
    for r in 0..h {
        for c in 0..w {
            let (nr, nc) = t.map_pixel((r, c), h, w);
            cells[nr * ow + nc] = mask.get(r, c);
        }
    }
    SemanticMask::new(oh, ow, cells, mask.resolution_m())
        .expect("a permutation of a valid mask is valid")
}

/// Per-road tags follow their roads: components are renumbered after a
/// transform, so each tag moves to the component its pixels land in.
pub fn transform_meta(mask: &SemanticMask, meta: &SceneMeta, t: GeoTransform, min_pixels: usize) -> Result<SceneMeta> {
    if meta.road_tags.is_empty() {
        return Ok(meta.clone());
    }
    let before = connected_components(mask, LandCover::Road, min_pixels)?;
    meta.validate(before.len())?;
    let out = transform_mask(mask, t);
    let after = connected_components(&out, LandCover::Road, min_pixels)?;
    let (h, w) = (mask.height(), mask.width());
    let mut tags = vec![RoadTag::default(); after.len()];
    for (i, road) in before.iter().enumerate() {
        let p = t.map_pixel(road.pixels[0], h, w);
        let j = after
            .iter()
            .position(|o| o.pixels.binary_search(&p).is_ok())
            .expect("a transform maps components onto components");
        tags[j] = meta.road_tag(i);
    }
    Ok(SceneMeta { road_tags: tags, ..meta.clone() })
}

const TOKENS: [(&str, DirectionBin); 4] = [
    ("NW--SE", DirectionBin::NWSE),
    ("NE--SW", DirectionBin::NESW),
    ("E--W", DirectionBin::EW),
    ("N--S", DirectionBin::NS),
];

/// Rewrites direction tokens; other text passes through. An answer that is
/// purely a list of directions is re-sorted into canonical order, so the
/// result matches what the generator would write for the transformed scene.
pub fn transform_answer(answer: &str, t: GeoTransform) -> String {
    let mut out = String::with_capacity(answer.len());
    let mut rest = answer;
    'scan: while !rest.is_empty() {
        for (tok, bin) in TOKENS {
            if let Some(tail) = rest.strip_prefix(tok) {
                out.push_str(t.map_direction(bin).token());
                rest = tail;
                continue 'scan;
            }
        }
        let ch = rest.chars().next().unwrap();
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    match parse_direction_list(&out) {
        Some(mut dirs) => {
            dirs.sort();
            dirs.dedup();
            crate::qa::templates::directions(&dirs)
        }
        None => out,
    }
}

/// `Some(bins)` if `text` is `A`, `A and B`, or `A, B and C` over direction tokens.
pub fn parse_direction_list(text: &str) -> Option<Vec<DirectionBin>> {
    let (head, last) = match text.rsplit_once(" and ") {
        Some((h, l)) => (Some(h), l),
        None => (None, text),
    };
    let mut dirs = Vec::new();
    if let Some(head) = head {
        for part in head.split(", ") {
            dirs.push(DirectionBin::from_token(part)?);
        }
    }
    dirs.push(DirectionBin::from_token(last)?);
    Some(dirs)
}

/// Transforms the mask and rewrites the direction-sensitive answers.
pub fn augment_sample(
    mask: &SemanticMask,
    qa_list: &[QAPair],
    t: GeoTransform,
) -> (SemanticMask, Vec<QAPair>) {
    let qas = qa_list
        .iter()
        .map(|qa| {
            let mut qa = qa.clone();
            if qa.qtype.is_direction_sensitive() {
                let a = transform_answer(&qa.answer, t);
                qa.set_answer(a);
            }
            qa
        })
        .collect();
    (transform_mask(mask, t), qas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::{generate_qa, QType, RuleThresholds, SceneMeta};
    use crate::raster::LandCover;
    use proptest::prelude::*;

    fn numbered(h: usize, w: usize) -> SemanticMask {
        let cells = (0..h * w).map(|i| (i % 8) as u8).collect();
        SemanticMask::new(h, w, cells, 0.3).unwrap()
    }

    #[test]
    fn rotation_arithmetic() {
        let t = GeoTransform::rot90cw();
        assert_eq!(t.map_pixel((0, 0), 3, 5), (0, 2));
        assert_eq!(t.map_pixel((2, 4), 3, 5), (4, 0));
        assert_eq!(t.map_pixel((1, 3), 3, 5), (3, 1));
        let m = numbered(3, 5);
        let r = transform_mask(&m, t);
        assert_eq!((r.height(), r.width()), (5, 3));
        for row in 0..3 {
            for c in 0..5 {
                assert_eq!(r.get(c, 3 - 1 - row), m.get(row, c));
            }
        }
    }

    #[test]
    fn group_laws() {
        let m = numbered(4, 6);
        let h = GeoTransform::hflip();
        let v = GeoTransform::vflip();
        let r = GeoTransform::rot90cw();
        assert!(h.then(h).is_identity());
        assert!(v.then(v).is_identity());
        assert!(r.then(r).then(r).then(r).is_identity());
        assert_eq!(transform_mask(&transform_mask(&m, h), h), m);
        let mut x = m.clone();
        for _ in 0..4 {
            x = transform_mask(&x, r);
        }
        assert_eq!(x, m);
        // hflip then vflip is a half turn
        assert_eq!(h.then(v), r.then(r));
    }

    #[test]
    fn composition_matches_sequential_application() {
        let m = numbered(4, 7);
        for a in GeoTransform::all() {
            for b in GeoTransform::all() {
                let seq = transform_mask(&transform_mask(&m, a), b);
                assert_eq!(transform_mask(&m, a.then(b)), seq, "{a} then {b}");
            }
            assert!(a.then(a.inverse()).is_identity());
        }
        let kinds = [TransformKind::HFlip, TransformKind::Rot90Cw, TransformKind::VFlip];
        let mut x = m.clone();
        for k in kinds {
            x = transform_mask(&x, GeoTransform::from_kind(k));
        }
        assert_eq!(transform_mask(&m, GeoTransform::from_kinds(&kinds)), x);
    }

    #[test]
    fn token_rules() {
        let h = GeoTransform::hflip();
        let v = GeoTransform::vflip();
        let r = GeoTransform::rot90cw();
        assert_eq!(transform_answer("NW--SE", h), "NE--SW");
        assert_eq!(transform_answer("NW--SE", v), "NE--SW");
        assert_eq!(transform_answer("E--W", r), "N--S");
        assert_eq!(transform_answer("E--W and N--S", h), "E--W and N--S");
        assert_eq!(transform_answer("E--W and N--S", r), "E--W and N--S");
        assert_eq!(transform_answer("E--W and NW--SE", r), "N--S and NE--SW");
        assert_eq!(
            transform_answer("The buildings are arranged along the NE--SW direction.", r),
            "The buildings are arranged along the NW--SE direction."
        );
        assert_eq!(transform_answer("There are 3 buildings.", r), "There are 3 buildings.");
    }

    #[test]
    fn token_maps_are_involutions() {
        for k in TransformKind::ALL {
            let t = GeoTransform::from_kind(k);
            for d in DirectionBin::ALL {
                assert_eq!(t.map_direction(t.map_direction(d)), d);
            }
        }
        let r = GeoTransform::rot90cw();
        let moved = DirectionBin::ALL.iter().filter(|&&d| r.map_direction(d) != d).count();
        assert_eq!(moved, 4);
    }

    #[test]
    fn augment_rewrites_only_direction_answers() {
        let mut m = SemanticMask::filled(96, 96, LandCover::Background, 0.3).unwrap();
        m.fill_rect(45, 5, 51, 91, LandCover::Road);
        m.fill_rect(5, 5, 15, 15, LandCover::Building);
        let qas = generate_qa("a", &m, &SceneMeta::default(), &RuleThresholds::default()).unwrap();
        let (m2, qas2) = augment_sample(&m, &qas, GeoTransform::rot90cw());
        assert_eq!((m2.height(), m2.width()), (96, 96));
        for (a, b) in qas.iter().zip(&qas2) {
            if a.qtype == QType::DirA {
                assert_eq!(a.answer, "E--W");
                assert_eq!(b.answer, "N--S");
            } else if !a.qtype.is_direction_sensitive() {
                assert_eq!(a, b);
            }
        }
    }

    fn arb_transform() -> impl Strategy<Value = GeoTransform> {
        (0usize..8).prop_map(|i| GeoTransform::all()[i])
    }

    fn arb_answer() -> impl Strategy<Value = String> {
        prop::sample::subsequence(DirectionBin::ALL.to_vec(), 1..=4).prop_map(|d| {
            crate::qa::templates::directions(&d)
        })
    }

    proptest! {
        #[test]
        fn answer_transform_is_a_group_action(
            a in arb_answer(), t1 in arb_transform(), t2 in arb_transform()
        ) {
            let lhs = transform_answer(&a, t1.then(t2));
            let rhs = transform_answer(&transform_answer(&a, t1), t2);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn sentence_transform_is_a_group_action(
            d in 0usize..4, t1 in arb_transform(), t2 in arb_transform()
        ) {
            let a = crate::qa::templates::buildings_along(DirectionBin::ALL[d]);
            prop_assert_eq!(
                transform_answer(&a, t1.then(t2)),
                transform_answer(&transform_answer(&a, t1), t2)
            );
        }
    }

    #[test]
    fn road_tags_follow_their_roads() {
        let mut m = SemanticMask::filled(40, 30, LandCover::Background, 0.3).unwrap();
        m.fill_rect(2, 0, 6, 30, LandCover::Road);
        m.fill_rect(30, 0, 34, 30, LandCover::Road);
        let meta = SceneMeta { road_tags: vec![RoadTag::Main, RoadTag::Track], ..Default::default() };
        let t = GeoTransform::vflip();
        let out = transform_meta(&m, &meta, t, 10).unwrap();
        assert_eq!(out.road_tags, vec![RoadTag::Track, RoadTag::Main]);
        let empty = SceneMeta::default();
        assert_eq!(transform_meta(&m, &empty, t, 10).unwrap(), empty);
    }
}
