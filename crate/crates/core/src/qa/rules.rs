//! Annotation guidelines as deterministic rules over a semantic mask.

use std::collections::BTreeSet;

use super::config::{RoadTag, RuleThresholds, SceneMeta};
use super::pair::{QAPair, QType};
use super::templates as t;
use crate::error::{Error, Result};
use crate::raster::{
    self, area_fraction, connected_components, min_distance, point_distance, road_graph,
    segments_from_graph, DirectionBin, GeoObject, LandCover, Pixel, Segment, SemanticMask,
};

/// Classes asked about in basic judging and area questions.
pub const JUDGED_CLASSES: [LandCover; 7] = [
    LandCover::Building,
    LandCover::Road,
    LandCover::Water,
    LandCover::Barren,
    LandCover::Forest,
    LandCover::Agriculture,
    LandCover::Playground,
];

/// Classes asked about in basic counting.
pub const COUNTED_CLASSES: [LandCover; 3] =
    [LandCover::Building, LandCover::Water, LandCover::Playground];

/// A building cluster large enough to be a residential area.
#[derive(Debug, Clone)]
pub struct Village {
    /// Buffered union of the member footprints.
    pub footprint: GeoObject,
    /// Indices into the scene's building list.
    pub members: Vec<usize>,
}

/// A building adjacent to a playground.
#[derive(Debug, Clone)]
pub struct School {
    pub building: usize,
    pub playground: usize,
    pub footprint: GeoObject,
}

/// Vegetation fraction of a region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lai {
    pub fraction: f64,
    pub needs_planting: bool,
}

/// Everything the rules derive from one mask, computed once.
#[derive(Debug, Clone)]
pub struct Scene {
    pub image_id: String,
    pub mask: SemanticMask,
    pub meta: SceneMeta,
    pub thresholds: RuleThresholds,
    /// Components per class id, after `min_pixels` filtering.
    pub objects: Vec<Vec<GeoObject>>,
    /// Centerline segments per road object.
    pub road_segments: Vec<Vec<Segment>>,
    pub junctions: Vec<(f64, f64)>,
    pub schools: Vec<School>,
    pub village: Option<Village>,
}

impl Scene {
    pub fn analyze(
        image_id: &str,
        mask: &SemanticMask,
        meta: &SceneMeta,
        thresholds: &RuleThresholds,
    ) -> Result<Self> {
        thresholds.validate()?;
        let objects = LandCover::ALL
            .iter()
            .map(|&c| connected_components(mask, c, thresholds.min_pixels))
            .collect::<Result<Vec<_>>>()?;
        let roads = &objects[LandCover::Road as usize];
        meta.validate(roads.len())?;

        let mut road_segments = Vec::with_capacity(roads.len());
        let mut junctions = Vec::new();
        for road in roads {
            let graph = road_graph(&road.pixels, &thresholds.centerline);
            road_segments.push(segments_from_graph(
                &graph,
                mask.resolution_m(),
                &thresholds.centerline,
            ));
            junctions.extend(graph.junctions);
        }

        let schools = find_schools(
            &objects[LandCover::Building as usize],
            &objects[LandCover::Playground as usize],
            mask.resolution_m(),
            thresholds.school_adjacency_m,
        );
        let village = cluster_village(&objects[LandCover::Building as usize], mask, thresholds);

        Ok(Scene {
            image_id: image_id.to_string(),
            mask: mask.clone(),
            meta: meta.clone(),
            thresholds: thresholds.clone(),
            objects,
            road_segments,
            junctions,
            schools,
            village,
        })
    }

    pub fn objects_of(&self, class: LandCover) -> &[GeoObject] {
        &self.objects[class as usize]
    }

    fn res(&self) -> f64 {
        self.mask.resolution_m()
    }

    fn qa(&self, key: &str, qtype: QType, question: impl Into<String>, answer: impl Into<String>) -> QAPair {
        QAPair::new(&self.image_id, key, qtype, question, answer)
            .with_meta("template_version", t::TEMPLATE_VERSION)
    }
}

/// Runs every generator and returns the pairs in a fixed order.
pub fn generate_qa(
    image_id: &str,
    mask: &SemanticMask,
    meta: &SceneMeta,
    thresholds: &RuleThresholds,
) -> Result<Vec<QAPair>> {
    let scene = Scene::analyze(image_id, mask, meta, thresholds)?;
    let mut out = gen_basic_judging(&scene);
    out.extend(gen_basic_counting(&scene));
    out.extend(gen_area_estimation(&scene)?);
    out.extend(gen_land_use(&scene));
    out.extend(gen_complex_judging(&scene));
    out.extend(gen_complex_counting(&scene));
    out.extend(gen_distribution_analysis(&scene));
    out.push(gen_direction_analysis(&scene));
    out.extend(gen_comprehensive(&scene)?);
    out.push(gen_open_ended(&scene)?);
    Ok(out)
}

pub fn gen_basic_judging(scene: &Scene) -> Vec<QAPair> {
    JUDGED_CLASSES
        .iter()
        .map(|&c| {
            let present = !scene.objects_of(c).is_empty();
            scene
                .qa(&format!("bj-{c}"), QType::BJ, t::q_exists(c), if present { t::YES } else { t::NO })
                .with_meta("class", c.name())
        })
        .collect()
}

pub fn gen_basic_counting(scene: &Scene) -> Vec<QAPair> {
    COUNTED_CLASSES
        .iter()
        .map(|&c| {
            let n = scene.objects_of(c).len();
            scene
                .qa(&format!("bc-{c}"), QType::BC, t::q_count(c), n.to_string())
                .with_meta("class", c.name())
        })
        .collect()
}

/// Decile `k` such that the fraction lies in `(k/10, (k+1)/10]`, or `None`
/// when it is zero. Computed in integers so bin edges are exact.
pub fn area_bin(count: usize, total: usize) -> Option<u32> {
    if count == 0 {
        return None;
    }
    // smallest k with count * 10 <= (k + 1) * total
    let k = (count * 10).div_ceil(total) - 1;
    Some(k as u32)
}

pub fn gen_area_estimation(scene: &Scene) -> Result<Vec<QAPair>> {
    let total = scene.mask.labeled_count();
    if total == 0 {
        return Err(Error::AllIgnored);
    }
    let hist = scene.mask.class_histogram();
    Ok(JUDGED_CLASSES
        .iter()
        .map(|&c| {
            scene
                .qa(
                    &format!("ae-area-{c}"),
                    QType::AE,
                    t::q_area(c),
                    t::area_bin(area_bin(hist[c as usize], total)),
                )
                .with_meta("class", c.name())
        })
        .collect())
}

/// Land-use attributes are only asked when the metadata supplies them.
pub fn gen_land_use(scene: &Scene) -> Option<QAPair> {
    if scene.meta.land_use.is_empty() {
        return None;
    }
    let uses: BTreeSet<&str> = scene.meta.land_use.iter().map(|s| s.as_str()).collect();
    let uses: Vec<&str> = uses.into_iter().collect();
    Some(scene.qa("ae-land-use", QType::AE, t::Q_LAND_USE, t::join_list(&uses)))
}

fn find_schools(
    buildings: &[GeoObject],
    playgrounds: &[GeoObject],
    res: f64,
    adjacency_m: f64,
) -> Vec<School> {
    let mut out = Vec::new();
    for (bi, b) in buildings.iter().enumerate() {
        for (pi, p) in playgrounds.iter().enumerate() {
            if !bbox_within(b, p, adjacency_m / res) {
                continue;
            }
            if min_distance(b, p, res) <= adjacency_m {
                let mut pixels = b.pixels.clone();
                pixels.extend_from_slice(&p.pixels);
                out.push(School {
                    building: bi,
                    playground: pi,
                    footprint: GeoObject::from_pixels(LandCover::Building, pixels, res),
                });
            }
        }
    }
    out
}

/// Cheap rejection: bounding boxes farther apart than `px` on either axis.
fn bbox_within(a: &GeoObject, b: &GeoObject, px: f64) -> bool {
    let (ar0, ac0, ar1, ac1) = a.bbox();
    let (br0, bc0, br1, bc1) = b.bbox();
    let gap = |lo1: usize, hi1: usize, lo2: usize, hi2: usize| {
        if hi1 < lo2 {
            (lo2 - hi1) as f64
        } else if hi2 < lo1 {
            (lo1 - hi2) as f64
        } else {
            0.0
        }
    };
    gap(ar0, ar1, br0, br1) <= px + 1.5 && gap(ac0, ac1, bc0, bc1) <= px + 1.5
}

/// Single-linkage clusters of objects whose boundaries are within `link_m`.
pub fn single_linkage(objects: &[GeoObject], res: f64, link_m: f64) -> Vec<Vec<usize>> {
    let n = objects.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if !bbox_within(&objects[i], &objects[j], link_m / res) {
                continue;
            }
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj && min_distance(&objects[i], &objects[j], res) <= link_m {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut clusters: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_default().push(i);
    }
    clusters.into_values().collect()
}

fn cluster_village(
    buildings: &[GeoObject],
    mask: &SemanticMask,
    th: &RuleThresholds,
) -> Option<Village> {
    let res = mask.resolution_m();
    let members = single_linkage(buildings, res, th.compact_dist_m)
        .into_iter()
        .filter(|c| c.len() >= th.village_min_buildings)
        // largest cluster; ties go to the earliest
        .fold(None::<Vec<usize>>, |best, c| match best {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        })?;
    let radius_px = th.compact_dist_m / 2.0 / res;
    let footprint = buffered_union(
        members.iter().map(|&i| &buildings[i]),
        radius_px,
        mask.height(),
        mask.width(),
        res,
    );
    Some(Village { footprint, members })
}

/// Union of object footprints dilated by a Euclidean disk, clipped to the grid.
fn buffered_union<'a>(
    objects: impl Iterator<Item = &'a GeoObject>,
    radius_px: f64,
    h: usize,
    w: usize,
    res: f64,
) -> GeoObject {
    let mut on = vec![false; h * w];
    // Half a pixel of slack so buffers of neighbors exactly 2r apart still meet.
    let reach = radius_px + 0.5;
    let r_int = reach.ceil() as isize;
    let mut disk = Vec::new();
    for dr in -r_int..=r_int {
        for dc in -r_int..=r_int {
            if ((dr * dr + dc * dc) as f64) <= reach * reach {
                disk.push((dr, dc));
            }
        }
    }
    for obj in objects {
        for &(r, c) in &obj.pixels {
            on[r * w + c] = true;
        }
        for (r, c) in obj.boundary_pixels() {
            for &(dr, dc) in &disk {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                    on[nr as usize * w + nc as usize] = true;
                }
            }
        }
    }
    let pixels: Vec<Pixel> = (0..h * w).filter(|&i| on[i]).map(|i| (i / w, i % w)).collect();
    GeoObject::from_pixels(LandCover::Building, pixels, res)
}

/// Residential area detection on its own.
pub fn detect_village(mask: &SemanticMask, th: &RuleThresholds) -> Result<Option<Village>> {
    th.validate()?;
    let buildings = connected_components(mask, LandCover::Building, th.min_pixels)?;
    Ok(cluster_village(&buildings, mask, th))
}

/// Junction count and locations over every road object of the mask.
pub fn detect_intersections(
    mask: &SemanticMask,
    th: &RuleThresholds,
) -> Result<Vec<(f64, f64)>> {
    let roads = connected_components(mask, LandCover::Road, th.min_pixels)?;
    Ok(roads
        .iter()
        .flat_map(|r| road_graph(&r.pixels, &th.centerline).junctions)
        .collect())
}

/// Forest fraction inside a region; planting is needed strictly below the threshold.
pub fn compute_lai(mask: &SemanticMask, region: &GeoObject, threshold: f64) -> Result<Lai> {
    if region.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let forest = region
        .pixels
        .iter()
        .filter(|&&(r, c)| mask.get(r, c) == LandCover::Forest.id())
        .count();
    let fraction = forest as f64 / region.len() as f64;
    Ok(Lai {
        fraction,
        needs_planting: fraction < threshold,
    })
}

/// Boundary-inclusive proximity test.
pub fn is_near(distance_m: f64, th: &RuleThresholds) -> bool {
    distance_m <= th.near_m
}

fn yes_no(b: bool) -> &'static str {
    if b {
        t::YES
    } else {
        t::NO
    }
}

/// Distance from the nearest junction to the nearest school, if both exist.
pub fn intersection_school_distance(scene: &Scene) -> Option<f64> {
    scene
        .schools
        .iter()
        .flat_map(|s| {
            scene
                .junctions
                .iter()
                .map(move |&j| point_distance(&s.footprint, j, scene.res()))
        })
        .min_by(f64::total_cmp)
}

pub fn gen_complex_judging(scene: &Scene) -> Vec<QAPair> {
    let th = &scene.thresholds;
    let res = scene.res();
    let near_school = intersection_school_distance(scene).is_some_and(|d| is_near(d, th));

    let buildings = scene.objects_of(LandCover::Building);
    let waters = scene.objects_of(LandCover::Water);
    let near_water = buildings.iter().any(|b| {
        waters
            .iter()
            .any(|w| bbox_within(b, w, th.near_m / res) && is_near(min_distance(b, w, res), th))
    });

    vec![
        scene.qa("cj-school", QType::CJ, t::Q_SCHOOL, yes_no(!scene.schools.is_empty())),
        scene.qa(
            "cj-intersection-near-school",
            QType::CJ,
            t::Q_INTERSECTION_NEAR_SCHOOL,
            yes_no(near_school),
        ),
        scene.qa("cj-village", QType::CJ, t::Q_VILLAGE, yes_no(scene.village.is_some())),
        scene.qa(
            "cj-buildings-near-water",
            QType::CJ,
            t::Q_BUILDINGS_NEAR_WATER,
            yes_no(near_water),
        ),
    ]
}

pub fn gen_complex_counting(scene: &Scene) -> Vec<QAPair> {
    let in_village = scene.village.as_ref().map_or(0, |v| v.members.len());
    vec![
        scene.qa(
            "cc-intersections",
            QType::CC,
            t::Q_COUNT_INTERSECTIONS,
            scene.junctions.len().to_string(),
        ),
        scene.qa(
            "cc-village-buildings",
            QType::CC,
            t::Q_COUNT_VILLAGE_BUILDINGS,
            in_village.to_string(),
        ),
    ]
}

/// Principal-axis orientation of object centroids, when clearly elongated.
pub fn centroid_axis(objects: &[GeoObject]) -> Option<DirectionBin> {
    let n = objects.len() as f64;
    let mr = objects.iter().map(|o| o.centroid.0).sum::<f64>() / n;
    let mc = objects.iter().map(|o| o.centroid.1).sum::<f64>() / n;
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for o in objects {
        let (dr, dc) = (o.centroid.0 - mr, o.centroid.1 - mc);
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    let tr = srr + scc;
    let disc = ((srr - scc).powi(2) + 4.0 * src * src).sqrt();
    let (major, minor) = ((tr + disc) / 2.0, (tr - disc) / 2.0);
    if major <= 0.0 || minor > major / 4.0 {
        return None;
    }
    let phi = 0.5 * (2.0 * src).atan2(scc - srr);
    // phi is measured toward +row (south); negate for the north-up frame.
    Some(raster::classify_angle(-phi.to_degrees()))
}

pub fn gen_distribution_analysis(scene: &Scene) -> Vec<QAPair> {
    let th = &scene.thresholds;
    let res = scene.res();
    let roads = scene.objects_of(LandCover::Road);
    let mut kinds: Vec<&str> = Vec::new();
    let mut seen = [false; 3];
    for forest in scene.objects_of(LandCover::Forest) {
        let residential = scene.village.as_ref().is_some_and(|v| {
            let inside = forest
                .pixels
                .iter()
                .filter(|p| v.footprint.pixels.binary_search(p).is_ok())
                .count();
            2 * inside > forest.len()
        });
        let along_road = roads.iter().any(|r| {
            bbox_within(forest, r, th.school_adjacency_m / res)
                && min_distance(forest, r, res) <= th.school_adjacency_m
        });
        let kind = if residential {
            2
        } else if along_road {
            1
        } else {
            0
        };
        seen[kind] = true;
    }
    for (k, label) in [t::TREES_FOREST, t::TREES_GREEN_BELT, t::TREES_RESIDENTIAL]
        .into_iter()
        .enumerate()
    {
        if seen[k] {
            kinds.push(label);
        }
    }

    let buildings = scene.objects_of(LandCover::Building);
    let arrangement = if buildings.len() < 3 {
        t::FEW_BUILDINGS.to_string()
    } else {
        match centroid_axis(buildings) {
            Some(dir) => t::buildings_along(dir),
            None => t::SCATTERED_BUILDINGS.to_string(),
        }
    };

    vec![
        scene.qa(
            "disa-trees",
            QType::DisA,
            t::Q_TREE_DISTRIBUTION,
            t::tree_distribution(&kinds),
        ),
        scene.qa(
            "disa-buildings",
            QType::DisA,
            t::Q_BUILDING_ARRANGEMENT,
            arrangement,
        ),
    ]
}

/// Sorted distinct direction bins of all main-road segments, or `None` when
/// the scene has no main road.
pub fn main_road_directions(scene: &Scene) -> Option<Vec<DirectionBin>> {
    let mut any_main = false;
    let mut dirs = BTreeSet::new();
    for (i, segs) in scene.road_segments.iter().enumerate() {
        if scene.meta.road_tag(i) != RoadTag::Main {
            continue;
        }
        any_main = true;
        for s in segs {
            if let Ok(d) = raster::classify_direction(s) {
                dirs.insert(d);
            }
        }
    }
    any_main.then(|| dirs.into_iter().collect())
}

pub fn gen_direction_analysis(scene: &Scene) -> QAPair {
    let answer = match main_road_directions(scene) {
        Some(dirs) if !dirs.is_empty() => t::directions(&dirs),
        _ => t::NO_MAIN_ROADS.to_string(),
    };
    scene.qa("dira-main-roads", QType::DirA, t::Q_ROAD_DIRECTIONS, answer)
}

pub fn gen_comprehensive(scene: &Scene) -> Result<Vec<QAPair>> {
    let traffic = if scene.objects_of(LandCover::Road).is_empty() {
        t::NO_ROADS.to_string()
    } else {
        t::intersections(scene.junctions.len())
    };
    let renovation = match &scene.village {
        None => t::NO_VILLAGE.to_string(),
        Some(v) => {
            let lai = compute_lai(&scene.mask, &v.footprint, scene.thresholds.lai_threshold)?;
            t::renovation(v.members.len(), lai.needs_planting)
        }
    };
    Ok(vec![
        scene.qa("ca-traffic", QType::CA, t::Q_TRAFFIC, traffic),
        scene.qa("ca-renovation", QType::CA, t::Q_RENOVATION, renovation),
    ])
}

/// Open-ended description with four extra phrasings stored as references.
pub fn gen_open_ended(scene: &Scene) -> Result<QAPair> {
    let mut ranked: Vec<(usize, LandCover)> = JUDGED_CLASSES
        .iter()
        .map(|&c| Ok(((area_fraction(&scene.mask, c)? * 1e9) as usize, c)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&(f, _)| f > 0)
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let top: Vec<LandCover> = ranked.iter().take(2).map(|&(_, c)| c).collect();
    let [first, rest @ ..] = t::land_cover_descriptions(&top);
    let mut qa = scene.qa("oe-land-cover", QType::OE, t::Q_LAND_COVER, first);
    for (i, r) in rest.into_iter().enumerate() {
        qa = qa.with_meta(&format!("ref{}", i + 1), r);
    }
    Ok(qa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qa::pair::extract_numbers;

    fn blank(h: usize, w: usize) -> SemanticMask {
        SemanticMask::filled(h, w, LandCover::Background, 0.3).unwrap()
    }

    fn scene(mask: &SemanticMask) -> Scene {
        Scene::analyze("t", mask, &SceneMeta::default(), &RuleThresholds::default()).unwrap()
    }

    fn answer<'a>(qas: &'a [QAPair], key: &str) -> &'a str {
        &qas.iter().find(|q| q.qid == format!("t-{key}")).unwrap().answer
    }

    #[test]
    fn basic_judging_and_counting() {
        let mut m = blank(40, 40);
        m.fill_rect(2, 2, 8, 8, LandCover::Water);
        m.fill_rect(20, 20, 24, 24, LandCover::Building);
        m.fill_rect(30, 30, 34, 34, LandCover::Building);
        m.fill_rect(10, 30, 12, 32, LandCover::Building); // 4 px, below min_pixels
        let s = scene(&m);
        let bj = gen_basic_judging(&s);
        assert_eq!(answer(&bj, "bj-water"), "Yes");
        assert_eq!(answer(&bj, "bj-playground"), "No");
        assert_eq!(bj[2].question, "Are there any water areas in this scene?");
        let bc = gen_basic_counting(&s);
        assert_eq!(answer(&bc, "bc-building"), "2");
        assert_eq!(answer(&bc, "bc-playground"), "0");
        assert_eq!(bc[0].numbers, vec![2]);
    }

    #[test]
    fn area_bins_are_upper_inclusive() {
        assert_eq!(area_bin(15, 100), Some(1));
        assert_eq!(area_bin(10, 100), Some(0));
        assert_eq!(area_bin(11, 100), Some(1));
        assert_eq!(area_bin(100, 100), Some(9));
        assert_eq!(area_bin(0, 100), None);
        assert_eq!(area_bin(1, 1_000_000), Some(0));
        // 3/10 exactly lands in (20%, 30%]
        assert_eq!(area_bin(3, 10), Some(2));
    }

    #[test]
    fn area_answers() {
        let mut m = blank(10, 10);
        m.fill_rect(0, 0, 1, 10, LandCover::Water);
        m.fill_rect(1, 0, 2, 5, LandCover::Water);
        let qas = gen_area_estimation(&scene(&m)).unwrap();
        assert_eq!(answer(&qas, "ae-area-water"), "(10%, 20%]");
        assert_eq!(answer(&qas, "ae-area-road"), "0%");
    }

    fn building_grid(m: &mut SemanticMask, n: usize, per_row: usize, pitch: usize, origin: (usize, usize)) {
        for i in 0..n {
            let r = origin.0 + (i / per_row) * pitch;
            let c = origin.1 + (i % per_row) * pitch;
            m.fill_rect(r, c, r + 4, c + 4, LandCover::Building);
        }
    }

    #[test]
    fn village_needs_more_than_twenty() {
        let th = RuleThresholds::default();
        let mut m = blank(60, 60);
        building_grid(&mut m, 20, 5, 10, (2, 2));
        assert!(detect_village(&m, &th).unwrap().is_none());
        building_grid(&mut m, 21, 5, 10, (2, 2));
        let v = detect_village(&m, &th).unwrap().unwrap();
        assert_eq!(v.members.len(), 21);
    }

    #[test]
    fn sparse_buildings_are_not_a_village() {
        let th = RuleThresholds::default();
        // 70 px * 0.3 m = 21 m between grid origins, 17 px = 5.1 m... too close;
        // use a pitch whose gap exceeds 20 m (67 px).
        let mut m = blank(5 * 75, 5 * 75);
        building_grid(&mut m, 25, 5, 75, (2, 2));
        assert!(detect_village(&m, &th).unwrap().is_none());
    }

    #[test]
    fn lai_threshold_is_strict() {
        let mut m = blank(10, 10);
        let region = GeoObject::from_pixels(
            LandCover::Building,
            (0..10).flat_map(|r| (0..10).map(move |c| (r, c))).collect(),
            0.3,
        );
        m.fill_rect(0, 0, 3, 10, LandCover::Forest);
        let lai = compute_lai(&m, &region, 0.30).unwrap();
        assert_eq!(lai.fraction, 0.30);
        assert!(!lai.needs_planting);
        m.set(2, 9, LandCover::Background.id());
        let lai = compute_lai(&m, &region, 0.30).unwrap();
        assert!(lai.needs_planting);
        let empty = GeoObject::from_pixels(LandCover::Building, vec![], 0.3);
        assert!(compute_lai(&m, &empty, 0.3).is_err());
    }

    #[test]
    fn near_is_inclusive() {
        let th = RuleThresholds::default();
        assert!(is_near(94.8, &th));
        assert!(is_near(100.0, &th));
        assert!(!is_near(100.000001, &th));
    }

    fn cross(m: &mut SemanticMask, center: (usize, usize), arm: usize, width: usize) {
        let (r, c) = center;
        let h = width / 2;
        m.fill_rect(r - h, c - arm, r - h + width, c + arm, LandCover::Road);
        m.fill_rect(r - arm, c - h, r + arm, c - h + width, LandCover::Road);
    }

    #[test]
    fn intersections_and_traffic() {
        let th = RuleThresholds::default();
        let mut m = blank(120, 120);
        cross(&mut m, (60, 60), 50, 6);
        assert_eq!(detect_intersections(&m, &th).unwrap().len(), 1);
        let s = scene(&m);
        let ca = gen_comprehensive(&s).unwrap();
        assert_eq!(ca[0].answer, "There is 1 intersection.");
        assert_eq!(ca[0].numbers, vec![1]);
        assert_eq!(gen_direction_analysis(&s).answer, "E--W and N--S");

        let mut bars = blank(120, 120);
        bars.fill_rect(20, 10, 26, 110, LandCover::Road);
        bars.fill_rect(80, 10, 86, 110, LandCover::Road);
        assert_eq!(detect_intersections(&bars, &th).unwrap().len(), 0);
        assert_eq!(gen_direction_analysis(&scene(&bars)).answer, "E--W");

        let none = blank(20, 20);
        assert_eq!(gen_comprehensive(&scene(&none)).unwrap()[0].answer, "There are no roads.");
        assert_eq!(
            gen_direction_analysis(&scene(&none)).answer,
            "There are no main roads."
        );
    }

    #[test]
    fn tee_junction_counts_once() {
        let mut m = blank(100, 120);
        m.fill_rect(10, 5, 16, 115, LandCover::Road);
        m.fill_rect(10, 57, 95, 63, LandCover::Road);
        assert_eq!(detect_intersections(&m, &RuleThresholds::default()).unwrap().len(), 1);
    }

    #[test]
    fn residential_roads_are_filtered() {
        let mut m = blank(60, 120);
        m.fill_rect(20, 10, 26, 110, LandCover::Road);
        let meta = SceneMeta {
            road_tags: vec![RoadTag::Residential],
            ..Default::default()
        };
        let s = Scene::analyze("t", &m, &meta, &RuleThresholds::default()).unwrap();
        assert_eq!(gen_direction_analysis(&s).answer, "There are no main roads.");
    }

    #[test]
    fn school_and_nearby_intersection() {
        // Cross centered at (60, 60); school about 40 px (12 m) away.
        let mut m = blank(200, 400);
        cross(&mut m, (60, 60), 50, 6);
        m.fill_rect(95, 100, 105, 110, LandCover::Building);
        m.fill_rect(95, 112, 115, 140, LandCover::Playground);
        let s = scene(&m);
        assert_eq!(s.schools.len(), 1);
        let cj = gen_complex_judging(&s);
        assert_eq!(answer(&cj, "cj-school"), "Yes");
        assert_eq!(answer(&cj, "cj-intersection-near-school"), "Yes");

        // Same school about 190 m from the junction: not near.
        let mut far = blank(200, 800);
        cross(&mut far, (60, 60), 50, 6);
        far.fill_rect(150, 700, 160, 710, LandCover::Building);
        far.fill_rect(150, 712, 170, 735, LandCover::Playground);
        let cj = gen_complex_judging(&scene(&far));
        assert_eq!(answer(&cj, "cj-school"), "Yes");
        assert_eq!(answer(&cj, "cj-intersection-near-school"), "No");
    }

    #[test]
    fn no_playground_means_no_school() {
        let mut m = blank(100, 100);
        cross(&mut m, (50, 50), 40, 6);
        m.fill_rect(70, 70, 80, 80, LandCover::Building);
        let cj = gen_complex_judging(&scene(&m));
        assert_eq!(answer(&cj, "cj-school"), "No");
        assert_eq!(answer(&cj, "cj-intersection-near-school"), "No");
    }

    #[test]
    fn under_greened_village_needs_planting() {
        let mut m = blank(80, 80);
        building_grid(&mut m, 25, 5, 10, (5, 5));
        let s = scene(&m);
        assert!(s.village.is_some());
        let ca = gen_comprehensive(&s).unwrap();
        assert_eq!(
            ca[1].answer,
            "The residential area with 25 buildings needs supplemental planting."
        );
        assert_eq!(ca[1].numbers, vec![25]);

        // Fill the gaps around the buildings with forest.
        let mut green = m.clone();
        for r in 0..80 {
            for c in 0..80 {
                if green.get(r, c) == 0 {
                    green.set(r, c, LandCover::Forest.id());
                }
            }
        }
        let ca = gen_comprehensive(&scene(&green)).unwrap();
        assert!(ca[1].answer.ends_with("has sufficient greening."));
    }

    #[test]
    fn tree_distribution_kinds() {
        let mut m = blank(100, 100);
        m.fill_rect(10, 10, 14, 90, LandCover::Road);
        m.fill_rect(15, 10, 19, 50, LandCover::Forest); // along the road
        m.fill_rect(60, 60, 90, 90, LandCover::Forest); // standalone
        let qas = gen_distribution_analysis(&scene(&m));
        assert_eq!(qas[0].answer, "There are forests and road green belts.");
        assert_eq!(qas[1].answer, "There are too few buildings.");
    }

    #[test]
    fn building_row_is_aligned() {
        let mut m = blank(40, 120);
        for i in 0..6 {
            m.fill_rect(10, 5 + i * 18, 15, 10 + i * 18, LandCover::Building);
        }
        let qas = gen_distribution_analysis(&scene(&m));
        assert_eq!(
            qas[1].answer,
            "The buildings are arranged along the E--W direction."
        );
    }

    #[test]
    fn full_generation_is_deterministic_and_consistent() {
        let mut m = blank(120, 120);
        cross(&mut m, (60, 60), 50, 6);
        m.fill_rect(5, 5, 20, 20, LandCover::Water);
        m.fill_rect(80, 80, 90, 90, LandCover::Building);
        let a = generate_qa("t", &m, &SceneMeta::default(), &RuleThresholds::default()).unwrap();
        let b = generate_qa("t", &m, &SceneMeta::default(), &RuleThresholds::default()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let ids: BTreeSet<&str> = a.iter().map(|q| q.qid.as_str()).collect();
        assert_eq!(ids.len(), a.len());
        for qa in &a {
            assert_eq!(qa.numbers, extract_numbers(&qa.answer));
        }
        for c in COUNTED_CLASSES {
            let bj = answer(&a, &format!("bj-{c}"));
            let bc: usize = answer(&a, &format!("bc-{c}")).parse().unwrap();
            assert_eq!(bj == "Yes", bc >= 1);
        }
        let oe = a.iter().find(|q| q.qtype == QType::OE).unwrap();
        assert_eq!(oe.references().len(), 5);
    }
}
