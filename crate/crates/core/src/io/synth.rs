//! Synthetic masks with a known object inventory, used as test oracles and
//! demo inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{classify_angle, DirectionBin, LandCover, SemanticMask, DEFAULT_RESOLUTION_M};

/// Other buildings keep at least this far from a village grid.
pub const VILLAGE_CLEARANCE_M: f64 = 21.0;
/// Random roads stay this many degrees inside their direction bin.
pub const ROAD_ANGLE_JITTER_DEG: f64 = 12.0;
const ATTEMPTS: usize = 500;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RoadLayout {
    #[default]
    None,
    /// One horizontal and one vertical road crossing at the center.
    Cross,
    /// Straight roads in distinct direction bins, 3 to 7 px wide.
    Random { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub resolution_m: f64,
    /// Isolated square buildings.
    pub buildings: usize,
    pub water: usize,
    pub playgrounds: usize,
    pub roads: RoadLayout,
    /// Buildings in one compact grid.
    pub village: Option<usize>,
    /// Random rectangles of random classes, drawn first and allowed to
    /// overlap. Their components are not part of the inventory.
    pub blobs: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            height: 64,
            width: 64,
            resolution_m: DEFAULT_RESOLUTION_M,
            buildings: 0,
            water: 0,
            playgrounds: 0,
            roads: RoadLayout::None,
            village: None,
            blobs: 0,
        }
    }
}

impl SynthSpec {
    pub const PRESETS: [&'static str; 5] = ["mixed", "cross", "village", "roads", "blobs"];

    /// Named scene recipes.
    pub fn preset(name: &str) -> Result<SynthSpec> {
        let base = SynthSpec::default();
        Ok(match name {
            "mixed" => SynthSpec {
                height: 96,
                width: 96,
                buildings: 5,
                water: 2,
                playgrounds: 1,
                roads: RoadLayout::Random { count: 2 },
                ..base
            },
            "cross" => SynthSpec { buildings: 3, water: 1, playgrounds: 1, roads: RoadLayout::Cross, ..base },
            "village" => SynthSpec { height: 128, width: 128, village: Some(24), water: 1, ..base },
            "roads" => SynthSpec { height: 96, width: 96, roads: RoadLayout::Random { count: 3 }, ..base },
            "blobs" => SynthSpec { blobs: 12, ..base },
            _ => {
                return Err(Error::invalid(
                    "preset",
                    format!("unknown preset {name:?}; expected mixed, cross, village, roads or blobs"),
                ))
            }
        })
    }
}

/// What was drawn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    /// Building components, village members included.
    pub buildings: usize,
    pub water: usize,
    pub playgrounds: usize,
    pub village_buildings: usize,
    /// Bins of the drawn roads in canonical order.
    pub road_directions: Vec<DirectionBin>,
    /// Road pairs crossing inside the image.
    pub road_crossings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub mask: SemanticMask,
    pub inventory: Inventory,
}

/// `n` scenes from one seeded stream.
pub fn gen_synthetic_masks(spec: &SynthSpec, seed: u64, n: usize) -> Result<Vec<SynthScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gen_scene(spec, &mut rng)).collect()
}

pub fn gen_synthetic_scene(spec: &SynthSpec, seed: u64) -> Result<SynthScene> {
    gen_scene(spec, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gen_scene<R: Rng>(spec: &SynthSpec, rng: &mut R) -> Result<SynthScene> {
    if spec.height < 16 || spec.width < 16 {
        return Err(Error::invalid("synth", "masks must be at least 16x16"));
    }
    let mut m = SemanticMask::filled(spec.height, spec.width, LandCover::Background, spec.resolution_m)?;
    let mut inv = Inventory::default();
    for _ in 0..spec.blobs {
        let class = LandCover::ALL[rng.gen_range(1..LandCover::ALL.len())];
        let (h, w) = (rng.gen_range(2..spec.height / 3), rng.gen_range(2..spec.width / 3));
        let (r, c) = (rng.gen_range(0..spec.height - h), rng.gen_range(0..spec.width - w));
        m.fill_rect(r, c, r + h, c + w, class);
    }
    match spec.roads {
        RoadLayout::None => {}
        RoadLayout::Cross => {
            let (h, w) = (spec.height, spec.width);
            m.fill_rect(h / 2 - 2, 0, h / 2 + 3, w, LandCover::Road);
            m.fill_rect(0, w / 2 - 2, h, w / 2 + 3, LandCover::Road);
            inv.road_directions = vec![DirectionBin::EW, DirectionBin::NS];
            inv.road_crossings = 1;
        }
        RoadLayout::Random { count } => random_roads(&mut m, count, rng, &mut inv)?,
    }
    let mut village_box = None;
    if let Some(n) = spec.village {
        village_box = Some(village_grid(&mut m, n, rng)?);
        inv.village_buildings = n;
        inv.buildings += n;
    }
    let clearance_px = (VILLAGE_CLEARANCE_M / spec.resolution_m).ceil() as usize;
    for _ in 0..spec.playgrounds {
        place(&mut m, LandCover::Playground, (8, 14), None, rng)?;
    }
    inv.playgrounds = spec.playgrounds;
    for _ in 0..spec.water {
        place(&mut m, LandCover::Water, (5, 12), None, rng)?;
    }
    inv.water = spec.water;
    for _ in 0..spec.buildings {
        place(&mut m, LandCover::Building, (4, 7), village_box.map(|b| (b, clearance_px)), rng)?;
    }
    inv.buildings += spec.buildings;
    Ok(SynthScene { mask: m, inventory: inv })
}

type Rect = (usize, usize, usize, usize);

/// Puts a square of a random side in `sides` on background cells, with a
/// one-pixel background margin so it never merges with anything.
fn place<R: Rng>(m: &mut SemanticMask, class: LandCover, sides: (usize, usize), avoid: Option<(Rect, usize)>, rng: &mut R) -> Result<()> {
    let (h, w) = (m.height(), m.width());
    for _ in 0..ATTEMPTS {
        let side = rng.gen_range(sides.0..=sides.1);
        if side + 2 >= h || side + 2 >= w {
            break;
        }
        let r0 = rng.gen_range(1..h - side);
        let c0 = rng.gen_range(1..w - side);
        if let Some(((vr0, vc0, vr1, vc1), gap)) = avoid {
            let dr = gap_between(r0, r0 + side, vr0, vr1);
            let dc = gap_between(c0, c0 + side, vc0, vc1);
            if dr * dr + dc * dc <= gap * gap {
                continue;
            }
        }
        if region_clear(m, (r0 - 1, c0 - 1, (r0 + side + 1).min(h), (c0 + side + 1).min(w))) {
            m.fill_rect(r0, c0, r0 + side, c0 + side, class);
            return Ok(());
        }
    }
    Err(Error::Infeasible(format!("no room for another {} on a {h}x{w} mask", class.name())))
}

fn gap_between(a0: usize, a1: usize, b0: usize, b1: usize) -> usize {
    if a1 <= b0 {
        b0 - a1
    } else if b1 <= a0 {
        a0 - b1
    } else {
        0
    }
}

fn region_clear(m: &SemanticMask, (r0, c0, r1, c1): Rect) -> bool {
    (r0..r1).all(|r| (c0..c1).all(|c| m.get(r, c) == LandCover::Background as u8))
}

/// `n` 5x5 buildings on a 7 px pitch, about 0.6 m apart at 0.3 m/px.
fn village_grid<R: Rng>(m: &mut SemanticMask, n: usize, rng: &mut R) -> Result<Rect> {
    const SIDE: usize = 5;
    const PITCH: usize = 7;
    let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
    let rows = n.div_ceil(cols);
    let (gh, gw) = (rows * PITCH, cols * PITCH);
    let (h, w) = (m.height(), m.width());
    if gh + 2 > h || gw + 2 > w {
        return Err(Error::Infeasible(format!("a {n}-building village does not fit in {h}x{w}")));
    }
    for _ in 0..ATTEMPTS {
        let r0 = rng.gen_range(1..=h - gh - 1);
        let c0 = rng.gen_range(1..=w - gw - 1);
        if !region_clear(m, (r0 - 1, c0 - 1, r0 + gh + 1, c0 + gw + 1)) {
            continue;
        }
        for i in 0..n {
            let (r, c) = (r0 + (i / cols) * PITCH, c0 + (i % cols) * PITCH);
            m.fill_rect(r, c, r + SIDE, c + SIDE, LandCover::Building);
        }
        return Ok((r0, c0, r0 + gh, c0 + gw));
    }
    Err(Error::Infeasible(format!("no clear area for a {n}-building village")))
}

/// Straight roads through the central half of the mask, each in its own
/// direction bin and at least `ROAD_ANGLE_JITTER_DEG` from the bin's center.
fn random_roads<R: Rng>(m: &mut SemanticMask, count: usize, rng: &mut R, inv: &mut Inventory) -> Result<()> {
    if count > DirectionBin::ALL.len() {
        return Err(Error::Infeasible(format!("{count} roads need distinct bins, only 4 exist")));
    }
    let (h, w) = (m.height() as f64, m.width() as f64);
    let mut bins: Vec<(DirectionBin, f64)> =
        [(DirectionBin::EW, 0.0), (DirectionBin::NESW, 45.0), (DirectionBin::NS, 90.0), (DirectionBin::NWSE, 135.0)].to_vec();
    let mut lines = Vec::new();
    for _ in 0..count {
        let (bin, center) = bins.swap_remove(rng.gen_range(0..bins.len()));
        let theta = center + rng.gen_range(-ROAD_ANGLE_JITTER_DEG..=ROAD_ANGLE_JITTER_DEG);
        debug_assert_eq!(classify_angle(theta), bin);
        let width = rng.gen_range(3..=7) as f64;
        let p = (rng.gen_range(h / 4.0..3.0 * h / 4.0), rng.gen_range(w / 4.0..3.0 * w / 4.0));
        // row axis points south
        let dir = (-theta.to_radians().sin(), theta.to_radians().cos());
        for r in 0..m.height() {
            for c in 0..m.width() {
                let (dr, dc) = (r as f64 - p.0, c as f64 - p.1);
                if (dr * dir.1 - dc * dir.0).abs() <= width / 2.0 {
                    m.set(r, c, LandCover::Road as u8);
                }
            }
        }
        lines.push((p, dir));
        inv.road_directions.push(bin);
    }
    inv.road_directions.sort();
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            if let Some((r, c)) = intersect(lines[i], lines[j]) {
                inv.road_crossings += (r >= 0.0 && r < h && c >= 0.0 && c < w) as usize;
            }
        }
    }
    Ok(())
}

type Line = ((f64, f64), (f64, f64));

fn intersect((p, u): Line, (q, v): Line) -> Option<(f64, f64)> {
    let den = u.0 * v.1 - u.1 * v.0;
    if den.abs() < 1e-12 {
        return None;
    }
    let t = ((q.0 - p.0) * v.1 - (q.1 - p.1) * v.0) / den;
    Some((p.0 + t * u.0, p.1 + t * u.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::connected_components;

    fn count(m: &SemanticMask, c: LandCover) -> usize {
        connected_components(m, c, 1).unwrap().len()
    }

    #[test]
    fn buildings_have_known_count() {
        let spec = SynthSpec { buildings: 3, ..Default::default() };
        let s = gen_synthetic_scene(&spec, 1).unwrap();
        assert_eq!(count(&s.mask, LandCover::Building), 3);
        assert_eq!(s.inventory.buildings, 3);
    }

    #[test]
    fn cross_inventory() {
        let s = gen_synthetic_scene(&SynthSpec { roads: RoadLayout::Cross, ..Default::default() }, 0).unwrap();
        assert_eq!(s.inventory.road_directions, vec![DirectionBin::EW, DirectionBin::NS]);
        assert_eq!(s.inventory.road_crossings, 1);
        assert_eq!(count(&s.mask, LandCover::Road), 1);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec { buildings: 4, water: 1, playgrounds: 1, roads: RoadLayout::Random { count: 2 }, blobs: 0, ..Default::default() };
        let a = gen_synthetic_masks(&spec, 7, 5).unwrap();
        let b = gen_synthetic_masks(&spec, 7, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].mask, a[1].mask);
    }

    #[test]
    fn village_members_counted() {
        let spec = SynthSpec { height: 128, width: 128, village: Some(21), ..Default::default() };
        let s = gen_synthetic_scene(&spec, 3).unwrap();
        assert_eq!(count(&s.mask, LandCover::Building), 21);
    }

    #[test]
    fn infeasible_packing() {
        let spec = SynthSpec { height: 16, width: 16, buildings: 40, ..Default::default() };
        assert!(matches!(gen_synthetic_scene(&spec, 0), Err(Error::Infeasible(_))));
        let spec = SynthSpec { roads: RoadLayout::Random { count: 5 }, ..Default::default() };
        assert!(matches!(gen_synthetic_scene(&spec, 0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn spec_json_shape() {
        let s: SynthSpec = serde_json::from_str(r#"{"roads": {"kind": "random", "count": 2}, "buildings": 3}"#).unwrap();
        assert_eq!(s.roads, RoadLayout::Random { count: 2 });
        assert!(serde_json::from_str::<SynthSpec>(r#"{"bildings": 3}"#).is_err());
    }
}
