use super::components::GeoObject;
use super::mask::Pixel;

/// Squared center distance at or below which two pixel squares touch
/// (shared edge or shared corner).
const TOUCH_SQ: i64 = 2;

/// Minimum distance in meters between two objects, measured between pixel
/// centers of their boundary pixels. Touching or overlapping objects are at 0.
pub fn min_distance(a: &GeoObject, b: &GeoObject, resolution_m: f64) -> f64 {
    min_pixel_distance(&a.boundary_pixels(), &b.boundary_pixels()) * resolution_m
}

/// Pixel-unit version of [`min_distance`] over explicit pixel lists.
pub fn min_pixel_distance(a: &[Pixel], b: &[Pixel]) -> f64 {
    match min_sq_distance(a, b) {
        Some(d) if d <= TOUCH_SQ => 0.0,
        Some(d) => (d as f64).sqrt(),
        None => f64::INFINITY,
    }
}

fn min_sq_distance(a: &[Pixel], b: &[Pixel]) -> Option<i64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    // Sort b by row so rows farther than the current best can be skipped.
    let mut sorted: Vec<(i64, i64)> = b.iter().map(|&(r, c)| (r as i64, c as i64)).collect();
    sorted.sort_unstable();
    let mut best = i64::MAX;
    for &(ar, ac) in a {
        let (ar, ac) = (ar as i64, ac as i64);
        let start = sorted.partition_point(|&(r, _)| r < ar);
        for &(br, bc) in &sorted[start..] {
            let dr = br - ar;
            if dr * dr >= best {
                break;
            }
            best = best.min(dr * dr + (bc - ac) * (bc - ac));
        }
        for &(br, bc) in sorted[..start].iter().rev() {
            let dr = ar - br;
            if dr * dr >= best {
                break;
            }
            best = best.min(dr * dr + (bc - ac) * (bc - ac));
        }
        if best == 0 {
            break;
        }
    }
    Some(best)
}

/// Distance in meters from a point in pixel coordinates to the nearest pixel
/// center of `obj`.
pub fn point_distance(obj: &GeoObject, point: (f64, f64), resolution_m: f64) -> f64 {
    obj.boundary_pixels()
        .iter()
        .map(|&(r, c)| ((r as f64 - point.0).powi(2) + (c as f64 - point.1).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
        * resolution_m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::mask::LandCover;
    use proptest::prelude::*;

    fn obj(p: Vec<Pixel>) -> GeoObject {
        GeoObject::from_pixels(LandCover::Building, p, 0.3)
    }

    #[test]
    fn single_pixels_ten_apart() {
        let a = obj(vec![(5, 5)]);
        let b = obj(vec![(5, 15)]);
        assert!((min_distance(&a, &b, 0.3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_and_touching_are_zero() {
        let a = obj(vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let b = obj(vec![(1, 1), (2, 2)]);
        assert_eq!(min_distance(&a, &b, 0.3), 0.0);
        let c = obj(vec![(2, 2)]);
        assert_eq!(min_distance(&a, &c, 0.3), 0.0);
        let d = obj(vec![(0, 3)]);
        assert!((min_distance(&a, &d, 1.0) - 2.0).abs() < 1e-12);
    }

    fn brute(a: &[Pixel], b: &[Pixel]) -> f64 {
        let mut best = f64::INFINITY;
        for &(ar, ac) in a {
            for &(br, bc) in b {
                let d = ((ar as f64 - br as f64).powi(2) + (ac as f64 - bc as f64).powi(2)).sqrt();
                best = best.min(d);
            }
        }
        if best <= 2f64.sqrt() + 1e-12 {
            0.0
        } else {
            best
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_matches_brute_force(
            a in proptest::collection::vec((0usize..24, 0usize..24), 1..20),
            b in proptest::collection::vec((0usize..24, 0usize..24), 1..20),
        ) {
            let oa = obj(a.clone());
            let ob = obj(b.clone());
            let d_ab = min_distance(&oa, &ob, 1.0);
            let d_ba = min_distance(&ob, &oa, 1.0);
            prop_assert_eq!(d_ab, d_ba);
            prop_assert!((d_ab - brute(&a, &b)).abs() < 1e-9);
        }

        #[test]
        fn triangle_inequality_on_point_objects(
            a in (0usize..50, 0usize..50),
            b in (0usize..50, 0usize..50),
            c in (0usize..50, 0usize..50),
        ) {
            let (oa, ob, oc) = (obj(vec![a]), obj(vec![b]), obj(vec![c]));
            let ab = min_distance(&oa, &ob, 1.0);
            let bc = min_distance(&ob, &oc, 1.0);
            let ac = min_distance(&oa, &oc, 1.0);
            prop_assume!(ab > 0.0 && bc > 0.0 && ac > 0.0);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }
}
