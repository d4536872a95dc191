//! 4-connected component labelling and pixel-edge boundary tracing.

use std::collections::{BTreeMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::mask::{LandCover, Pixel, SemanticMask};
use crate::error::Result;

/// Minimum component size used by the QA rules to suppress speckle.
pub const DEFAULT_MIN_PIXELS: usize = 10;

/// A closed ring of lattice corners `(row, col)`; the last vertex connects back to the first.
pub type Ring = Vec<(i64, i64)>;

/// One connected region of a single class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoObject {
    pub class: LandCover,
    /// Row-major sorted pixel indices.
    pub pixels: Vec<Pixel>,
    pub area_m2: f64,
    /// Outer ring first, then holes. Outer rings run clockwise on screen
    /// (row axis down) and holes counter-clockwise, so the signed areas sum
    /// to the pixel count.
    pub boundary: Vec<Ring>,
    pub centroid: (f64, f64),
}

impl GeoObject {
    /// Builds an object from an arbitrary nonempty pixel set.
    pub fn from_pixels(class: LandCover, mut pixels: Vec<Pixel>, resolution_m: f64) -> Self {
        pixels.sort_unstable();
        pixels.dedup();
        let n = pixels.len() as f64;
        let (sr, sc) = pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(r, c)| (a + r as f64, b + c as f64));
        let boundary = trace_boundary(&pixels);
        GeoObject {
            class,
            area_m2: n * resolution_m * resolution_m,
            centroid: (sr / n, sc / n),
            boundary,
            pixels,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixels with at least one 4-neighbor outside the object.
    pub fn boundary_pixels(&self) -> Vec<Pixel> {
        let set: HashSet<Pixel> = self.pixels.iter().copied().collect();
        self.pixels
            .iter()
            .copied()
            .filter(|&(r, c)| {
                r == 0
                    || c == 0
                    || !set.contains(&(r - 1, c))
                    || !set.contains(&(r + 1, c))
                    || !set.contains(&(r, c - 1))
                    || !set.contains(&(r, c + 1))
            })
            .collect()
    }

    /// Inclusive bounding box `(r0, c0, r1, c1)`.
    pub fn bbox(&self) -> (usize, usize, usize, usize) {
        let mut b = (usize::MAX, usize::MAX, 0, 0);
        for &(r, c) in &self.pixels {
            b.0 = b.0.min(r);
            b.1 = b.1.min(c);
            b.2 = b.2.max(r);
            b.3 = b.3.max(c);
        }
        b
    }
}

/// Maximal 4-connected regions of `class` with at least `min_pixels` pixels,
/// ordered by their first pixel in row-major order.
pub fn connected_components(
    mask: &SemanticMask,
    class: LandCover,
    min_pixels: usize,
) -> Result<Vec<GeoObject>> {
    Ok(component_pixel_sets(mask, class)
        .into_iter()
        .filter(|p| p.len() >= min_pixels.max(1))
        .map(|p| GeoObject::from_pixels(class, p, mask.resolution_m()))
        .collect())
}

/// Every 4-connected region of `class`, regardless of size, in row-major order
/// of first pixel. Each set is sorted.
pub fn component_pixel_sets(mask: &SemanticMask, class: LandCover) -> Vec<Vec<Pixel>> {
    let (h, w) = (mask.height(), mask.width());
    let id = class.id();
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            if seen[r * w + c] || mask.get(r, c) != id {
                continue;
            }
            seen[r * w + c] = true;
            queue.push_back((r, c));
            let mut region = Vec::new();
            while let Some((pr, pc)) = queue.pop_front() {
                region.push((pr, pc));
                let mut visit = |nr: usize, nc: usize| {
                    if !seen[nr * w + nc] && mask.get(nr, nc) == id {
                        seen[nr * w + nc] = true;
                        queue.push_back((nr, nc));
                    }
                };
                if pr > 0 {
                    visit(pr - 1, pc);
                }
                if pr + 1 < h {
                    visit(pr + 1, pc);
                }
                if pc > 0 {
                    visit(pr, pc - 1);
                }
                if pc + 1 < w {
                    visit(pr, pc + 1);
                }
            }
            region.sort_unstable();
            out.push(region);
        }
    }
    out
}

// Unit steps in (row, col) lattice coordinates.
const RIGHT: (i64, i64) = (0, 1);
const DOWN: (i64, i64) = (1, 0);
const LEFT: (i64, i64) = (0, -1);
const UP: (i64, i64) = (-1, 0);

/// Traces the pixel-edge boundary of a pixel set into closed rings.
///
/// Each pixel contributes its four edges walked clockwise on screen; edges
/// shared by two member pixels cancel, and the survivors are chained. At
/// saddle corners the walk turns right so diagonal-only contacts stay apart.
pub fn trace_boundary(pixels: &[Pixel]) -> Vec<Ring> {
    let set: HashSet<Pixel> = pixels.iter().copied().collect();
    let has = |r: i64, c: i64| r >= 0 && c >= 0 && set.contains(&(r as usize, c as usize));

    // start corner -> outgoing directions
    let mut edges: BTreeMap<(i64, i64), Vec<(i64, i64)>> = BTreeMap::new();
    for &(r, c) in pixels {
        let (r, c) = (r as i64, c as i64);
        if !has(r - 1, c) {
            edges.entry((r, c)).or_default().push(RIGHT);
        }
        if !has(r, c + 1) {
            edges.entry((r, c + 1)).or_default().push(DOWN);
        }
        if !has(r + 1, c) {
            edges.entry((r + 1, c + 1)).or_default().push(LEFT);
        }
        if !has(r, c - 1) {
            edges.entry((r + 1, c)).or_default().push(UP);
        }
    }

    let mut rings = Vec::new();
    loop {
        let Some((&start, _)) = edges.iter().find(|(_, v)| !v.is_empty()) else {
            break;
        };
        let mut ring = vec![start];
        let mut at = start;
        let mut dir = take_edge(&mut edges, at, None);
        loop {
            at = (at.0 + dir.0, at.1 + dir.1);
            if at == start {
                break;
            }
            ring.push(at);
            dir = take_edge(&mut edges, at, Some(dir));
        }
        rings.push(simplify_ring(ring));
    }
    rings
}

fn take_edge(
    edges: &mut BTreeMap<(i64, i64), Vec<(i64, i64)>>,
    at: (i64, i64),
    incoming: Option<(i64, i64)>,
) -> (i64, i64) {
    let out = edges.get_mut(&at).expect("boundary edges form closed loops");
    let idx = match incoming {
        Some(d) if out.len() > 1 => {
            // Clockwise turn of (dr, dc) on screen is (dc, -dr).
            let right = (d.1, -d.0);
            out.iter().position(|&o| o == right).unwrap_or(0)
        }
        _ => 0,
    };
    out.swap_remove(idx)
}

/// Drops collinear vertices.
fn simplify_ring(ring: Ring) -> Ring {
    let n = ring.len();
    if n < 4 {
        return ring;
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let prev = ring[(i + n - 1) % n];
        let cur = ring[i];
        let next = ring[(i + 1) % n];
        let d1 = (cur.0 - prev.0, cur.1 - prev.1);
        let d2 = (next.0 - cur.0, next.1 - cur.1);
        if d1.0 * d2.1 - d1.1 * d2.0 != 0 {
            out.push(cur);
        }
    }
    out
}

/// Shoelace area of a ring, positive for clockwise-on-screen rings.
pub fn ring_signed_area(ring: &Ring) -> f64 {
    let n = ring.len();
    let mut acc = 0i64;
    for i in 0..n {
        let (r0, c0) = ring[i];
        let (r1, c1) = ring[(i + 1) % n];
        // x = col, y = row; row-down flips the usual orientation sign.
        acc += c0 * r1 - c1 * r0;
    }
    acc as f64 / 2.0
}

/// Even-odd point-in-polygon test over all rings of a boundary.
pub fn boundary_contains(boundary: &[Ring], row: f64, col: f64) -> bool {
    let mut inside = false;
    for ring in boundary {
        let n = ring.len();
        for i in 0..n {
            let (r0, c0) = (ring[i].0 as f64, ring[i].1 as f64);
            let (r1, c1) = (ring[(i + 1) % n].0 as f64, ring[(i + 1) % n].1 as f64);
            if (r0 > row) != (r1 > row) {
                let cross = c0 + (row - r0) * (c1 - c0) / (r1 - r0);
                if col < cross {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::mask::LandCover::*;

    fn blank(h: usize, w: usize) -> SemanticMask {
        SemanticMask::filled(h, w, Background, 0.3).unwrap()
    }

    #[test]
    fn empty_class_yields_nothing() {
        let m = blank(8, 8);
        assert!(connected_components(&m, Building, 1).unwrap().is_empty());
    }

    #[test]
    fn three_rectangles() {
        let mut m = blank(20, 20);
        m.fill_rect(0, 0, 4, 4, Building);
        m.fill_rect(10, 2, 14, 6, Building);
        m.fill_rect(5, 12, 9, 19, Building);
        let objs = connected_components(&m, Building, 10).unwrap();
        assert_eq!(objs.len(), 3);
        assert_eq!(objs[0].pixels[0], (0, 0));
        assert_eq!(objs[1].pixels[0], (5, 12));
        assert_eq!(objs[2].pixels[0], (10, 2));
        assert!((objs[0].area_m2 - 16.0 * 0.09).abs() < 1e-12);
        assert_eq!(objs[0].centroid, (1.5, 1.5));
    }

    #[test]
    fn corner_contact_is_two_objects() {
        let mut m = blank(10, 10);
        m.fill_rect(0, 0, 4, 4, Building);
        m.fill_rect(4, 4, 8, 8, Building);
        let objs = connected_components(&m, Building, 1).unwrap();
        assert_eq!(objs.len(), 2);
    }

    #[test]
    fn min_pixels_filters_small_regions() {
        let mut m = blank(10, 10);
        m.fill_rect(0, 0, 3, 3, Water);
        m.fill_rect(5, 5, 9, 9, Water);
        assert_eq!(connected_components(&m, Water, 10).unwrap().len(), 1);
        assert_eq!(connected_components(&m, Water, 9).unwrap().len(), 2);
    }

    #[test]
    fn boundary_of_ring_with_hole() {
        let mut m = blank(10, 10);
        m.fill_rect(1, 1, 8, 8, Forest);
        m.fill_rect(3, 3, 5, 5, Background);
        let obj = &connected_components(&m, Forest, 1).unwrap()[0];
        assert_eq!(obj.boundary.len(), 2);
        let total: f64 = obj.boundary.iter().map(ring_signed_area).sum();
        assert_eq!(total, obj.len() as f64);
        assert_eq!(obj.boundary[0], vec![(1, 1), (1, 8), (8, 8), (8, 1)]);
        assert!(boundary_contains(&obj.boundary, 1.5, 1.5));
        assert!(!boundary_contains(&obj.boundary, 3.5, 3.5));
    }

    #[test]
    fn diagonal_saddle_keeps_area() {
        // Two squares that share only a corner, traced as one pixel set.
        let pixels = vec![(0, 0), (1, 1)];
        let rings = trace_boundary(&pixels);
        let total: f64 = rings.iter().map(ring_signed_area).sum();
        assert_eq!(total, 2.0);
    }
}
