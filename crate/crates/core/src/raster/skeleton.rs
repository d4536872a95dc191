//! Road centerlines: thinning, skeleton graph, segment extraction.
//!
//! The pixel region is thinned (Zhang-Suen), cleaned of staircase corners,
//! and turned into a graph whose nodes are junction clusters and endpoints.
//! Short spurs left by thinning are pruned, then every branch is split at
//! sharp direction changes and each piece is fitted with an orthogonal
//! least-squares line.

use serde::{Deserialize, Serialize};

use super::components::GeoObject;
use super::mask::Pixel;

/// Tunables for centerline extraction, in pixels and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CenterlineParams {
    /// Junction pixels closer than this are merged into one node.
    pub junction_merge_px: f64,
    /// Half-window used to measure the local turn of a branch.
    pub turn_window_px: usize,
    /// Turn angle above which a branch is split.
    pub turn_angle_deg: f64,
    /// Endpoint branches shorter than this hanging off a junction are pruned.
    pub spur_px: usize,
    /// Fitted segments shorter than this are dropped.
    pub min_segment_px: f64,
    /// Segments shorter than this many road widths are dropped too: inside a
    /// crossing the skeleton bends with the pixel grid, not with the road.
    pub min_segment_widths: f64,
}

impl Default for CenterlineParams {
    fn default() -> Self {
        Self {
            junction_merge_px: 3.0,
            turn_window_px: 15,
            turn_angle_deg: 30.0,
            spur_px: 10,
            min_segment_px: 5.0,
            min_segment_widths: 2.0,
        }
    }
}

/// A straight piece of centerline in pixel coordinates `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub length_m: f64,
}

/// Skeleton graph of one road region after pruning.
#[derive(Debug, Clone, Default)]
pub struct RoadGraph {
    /// Centers of nodes where three or more branches meet.
    pub junctions: Vec<(f64, f64)>,
    /// Pixel paths between nodes or endpoints.
    pub branches: Vec<Vec<Pixel>>,
    /// Region area over skeleton length.
    pub mean_width_px: f64,
}

/// Binary raster over the bounding box of a pixel set, padded by one cell.
struct Grid {
    h: usize,
    w: usize,
    r0: usize,
    c0: usize,
    on: Vec<bool>,
}

// N, NE, E, SE, S, SW, W, NW
const RING: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

impl Grid {
    fn from_pixels(pixels: &[Pixel]) -> Self {
        let r0 = pixels.iter().map(|p| p.0).min().unwrap_or(0);
        let c0 = pixels.iter().map(|p| p.1).min().unwrap_or(0);
        let r1 = pixels.iter().map(|p| p.0).max().unwrap_or(0);
        let c1 = pixels.iter().map(|p| p.1).max().unwrap_or(0);
        let (h, w) = (r1 - r0 + 3, c1 - c0 + 3);
        let mut on = vec![false; h * w];
        for &(r, c) in pixels {
            on[(r - r0 + 1) * w + (c - c0 + 1)] = true;
        }
        Grid { h, w, r0, c0, on }
    }

    fn at(&self, r: usize, c: usize) -> bool {
        self.on[r * self.w + c]
    }

    fn ring(&self, r: usize, c: usize) -> [bool; 8] {
        let mut out = [false; 8];
        for (k, &(dr, dc)) in RING.iter().enumerate() {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr >= 0 && nc >= 0 && (nr as usize) < self.h && (nc as usize) < self.w {
                out[k] = self.at(nr as usize, nc as usize);
            }
        }
        out
    }

    fn neighbors(&self, p: (usize, usize)) -> Vec<(usize, usize)> {
        let ring = self.ring(p.0, p.1);
        // 4-neighbors first keeps walks along the thinnest path.
        [0usize, 2, 4, 6, 1, 3, 5, 7]
            .into_iter()
            .filter(|&k| ring[k])
            .map(|k| {
                (
                    (p.0 as isize + RING[k].0) as usize,
                    (p.1 as isize + RING[k].1) as usize,
                )
            })
            .collect()
    }

    fn degree(&self, p: (usize, usize)) -> usize {
        self.ring(p.0, p.1).iter().filter(|&&b| b).count()
    }

    fn to_global(&self, p: (usize, usize)) -> Pixel {
        (p.0 + self.r0 - 1, p.1 + self.c0 - 1)
    }

    fn set_pixels(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.h {
            for c in 0..self.w {
                if self.at(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }
}

fn zhang_suen(grid: &mut Grid) {
    loop {
        let mut changed = false;
        for step in 0..2 {
            let mut remove = Vec::new();
            for r in 1..grid.h - 1 {
                for c in 1..grid.w - 1 {
                    if !grid.at(r, c) {
                        continue;
                    }
                    let p = grid.ring(r, c);
                    let b = p.iter().filter(|&&x| x).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&k| !p[k] && p[(k + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    // p[0]=N p[2]=E p[4]=S p[6]=W
                    let ok = if step == 0 {
                        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
                    } else {
                        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
                    };
                    if ok {
                        remove.push(r * grid.w + c);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                grid.on[i] = false;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Removes skeleton pixels whose 2 or 3 neighbors are already mutually
/// connected, which turns 4-connected staircases into 8-thin lines.
fn remove_staircases(grid: &mut Grid) {
    for r in 1..grid.h - 1 {
        for c in 1..grid.w - 1 {
            if !grid.at(r, c) {
                continue;
            }
            let ring = grid.ring(r, c);
            let n = ring.iter().filter(|&&b| b).count();
            if (2..=3).contains(&n) && ring_components(&ring) == 1 {
                grid.on[r * grid.w + c] = false;
            }
        }
    }
}

/// Number of 8-connected groups among the set cells of a 3x3 ring.
fn ring_components(ring: &[bool; 8]) -> usize {
    let adjacent = |a: usize, b: usize| {
        let d = (a as isize - b as isize).rem_euclid(8);
        d == 1 || d == 7 || (a % 2 == 0 && b % 2 == 0 && (d == 2 || d == 6))
    };
    let mut label = [usize::MAX; 8];
    let mut groups = 0;
    for start in 0..8 {
        if !ring[start] || label[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        label[start] = groups;
        while let Some(k) = stack.pop() {
            for j in 0..8 {
                if ring[j] && label[j] == usize::MAX && adjacent(k, j) {
                    label[j] = groups;
                    stack.push(j);
                }
            }
        }
        groups += 1;
    }
    groups
}

/// Thinned, 8-thin skeleton of a pixel set, in global coordinates.
pub fn skeletonize(pixels: &[Pixel]) -> Vec<Pixel> {
    if pixels.is_empty() {
        return Vec::new();
    }
    let mut grid = Grid::from_pixels(pixels);
    zhang_suen(&mut grid);
    remove_staircases(&mut grid);
    grid.set_pixels().into_iter().map(|p| grid.to_global(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum End {
    Node(usize),
    Tip,
}

#[derive(Debug, Clone)]
struct Branch {
    a: End,
    b: End,
    path: Vec<(usize, usize)>,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.0[root] != root {
            root = self.0[root];
        }
        let mut cur = x;
        while self.0[cur] != root {
            let next = self.0[cur];
            self.0[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Builds the pruned skeleton graph of a road region.
pub fn road_graph(pixels: &[Pixel], params: &CenterlineParams) -> RoadGraph {
    if pixels.len() < 2 {
        return RoadGraph::default();
    }
    let mut grid = Grid::from_pixels(pixels);
    zhang_suen(&mut grid);
    remove_staircases(&mut grid);
    let skel = grid.set_pixels();
    if skel.is_empty() {
        return RoadGraph::default();
    }

    // Junction pixels clustered into nodes.
    let junction_px: Vec<(usize, usize)> =
        skel.iter().copied().filter(|&p| grid.degree(p) >= 3).collect();
    let mut uf = UnionFind((0..junction_px.len()).collect());
    let merge_sq = params.junction_merge_px * params.junction_merge_px;
    for i in 0..junction_px.len() {
        for j in i + 1..junction_px.len() {
            let dr = junction_px[i].0 as f64 - junction_px[j].0 as f64;
            let dc = junction_px[i].1 as f64 - junction_px[j].1 as f64;
            if dr * dr + dc * dc <= merge_sq {
                uf.union(i, j);
            }
        }
    }
    let mut node_of = vec![usize::MAX; grid.h * grid.w];
    let mut root_to_node = std::collections::BTreeMap::new();
    let mut node_pixels: Vec<Vec<(usize, usize)>> = Vec::new();
    for (i, &p) in junction_px.iter().enumerate() {
        let root = uf.find(i);
        let id = *root_to_node.entry(root).or_insert_with(|| {
            node_pixels.push(Vec::new());
            node_pixels.len() - 1
        });
        node_of[p.0 * grid.w + p.1] = id;
        node_pixels[id].push(p);
    }
    let node_at = |p: (usize, usize)| {
        let id = node_of[p.0 * grid.w + p.1];
        (id != usize::MAX).then_some(id)
    };

    let mut visited = vec![false; grid.h * grid.w];
    let mut branches: Vec<Branch> = Vec::new();

    let walk = |start: Vec<(usize, usize)>, visited: &mut Vec<bool>| -> (Vec<(usize, usize)>, End) {
        let mut path = start;
        loop {
            let cur = *path.last().unwrap();
            let prev = if path.len() >= 2 { Some(path[path.len() - 2]) } else { None };
            let nexts: Vec<(usize, usize)> = grid
                .neighbors(cur)
                .into_iter()
                .filter(|&q| Some(q) != prev && !path.contains(&q))
                .collect();
            if let Some(&q) = nexts.iter().find(|&&q| node_at(q).is_some()) {
                if path.len() > 1 || node_at(cur).is_none() {
                    path.push(q);
                    return (path, End::Node(node_at(q).unwrap()));
                }
            }
            match nexts.into_iter().find(|&q| !visited[q.0 * grid.w + q.1] && node_at(q).is_none()) {
                Some(q) => {
                    visited[q.0 * grid.w + q.1] = true;
                    path.push(q);
                }
                None => return (path, End::Tip),
            }
        }
    };

    for (id, members) in node_pixels.iter().enumerate() {
        for &j in members {
            for q in grid.neighbors(j) {
                if node_at(q).is_some() || visited[q.0 * grid.w + q.1] {
                    continue;
                }
                visited[q.0 * grid.w + q.1] = true;
                let (path, end) = walk(vec![j, q], &mut visited);
                // Short loops back into the same cluster are junction interiors.
                if end == End::Node(id)
                    && path.len() as f64 <= 2.0 * params.junction_merge_px + 3.0
                {
                    continue;
                }
                branches.push(Branch {
                    a: End::Node(id),
                    b: end,
                    path,
                });
            }
        }
    }

    // Components without junctions: simple arcs from a tip, then cycles.
    for &p in &skel {
        if visited[p.0 * grid.w + p.1] || node_at(p).is_some() || grid.degree(p) > 1 {
            continue;
        }
        visited[p.0 * grid.w + p.1] = true;
        let (path, end) = walk(vec![p], &mut visited);
        branches.push(Branch { a: End::Tip, b: end, path });
    }
    for &p in &skel {
        if visited[p.0 * grid.w + p.1] || node_at(p).is_some() {
            continue;
        }
        visited[p.0 * grid.w + p.1] = true;
        let (mut path, _) = walk(vec![p], &mut visited);
        path.push(p);
        branches.push(Branch {
            a: End::Tip,
            b: End::Tip,
            path,
        });
    }

    prune_and_merge(&mut branches, node_pixels.len(), params.spur_px);

    let mut degree = vec![0usize; node_pixels.len()];
    for br in &branches {
        for e in [br.a, br.b] {
            if let End::Node(n) = e {
                degree[n] += 1;
            }
        }
    }
    let junctions = (0..node_pixels.len())
        .filter(|&n| degree[n] >= 3)
        .map(|n| {
            let global: Vec<Pixel> = node_pixels[n].iter().map(|&p| grid.to_global(p)).collect();
            let k = global.len() as f64;
            (
                global.iter().map(|p| p.0 as f64).sum::<f64>() / k,
                global.iter().map(|p| p.1 as f64).sum::<f64>() / k,
            )
        })
        .collect();
    RoadGraph {
        junctions,
        branches: branches
            .into_iter()
            .map(|b| b.path.into_iter().map(|p| grid.to_global(p)).collect())
            .collect(),
        mean_width_px: pixels.len() as f64 / skel.len() as f64,
    }
}

fn prune_and_merge(branches: &mut Vec<Branch>, nodes: usize, spur_px: usize) {
    loop {
        let mut degree = vec![0usize; nodes];
        for br in branches.iter() {
            for e in [br.a, br.b] {
                if let End::Node(n) = e {
                    degree[n] += 1;
                }
            }
        }

        // Shortest spur hanging off a real junction.
        let spur = branches
            .iter()
            .enumerate()
            .filter(|(_, br)| br.path.len() < spur_px)
            .filter_map(|(i, br)| match (br.a, br.b) {
                (End::Node(n), End::Tip) | (End::Tip, End::Node(n)) if degree[n] >= 3 => {
                    Some((br.path.len(), i))
                }
                _ => None,
            })
            .min();
        if let Some((_, i)) = spur {
            branches.remove(i);
            continue;
        }

        // A node with exactly two distinct branch ends joins them.
        let pass_through = (0..nodes).find(|&n| {
            degree[n] == 2
                && branches
                    .iter()
                    .filter(|br| br.a == End::Node(n) || br.b == End::Node(n))
                    .count()
                    == 2
        });
        if let Some(n) = pass_through {
            let idx: Vec<usize> = branches
                .iter()
                .enumerate()
                .filter(|(_, br)| br.a == End::Node(n) || br.b == End::Node(n))
                .map(|(i, _)| i)
                .collect();
            let second = branches.remove(idx[1]);
            let first = branches.remove(idx[0]);
            branches.push(join_at(first, second, End::Node(n)));
            continue;
        }

        // A node with a single branch is just a tip.
        if let Some(n) = (0..nodes).find(|&n| degree[n] == 1) {
            for br in branches.iter_mut() {
                if br.a == End::Node(n) {
                    br.a = End::Tip;
                }
                if br.b == End::Node(n) {
                    br.b = End::Tip;
                }
            }
            continue;
        }
        break;
    }
}

/// Concatenates two branches that share the end `at`, oriented away from it.
fn join_at(mut x: Branch, mut y: Branch, at: End) -> Branch {
    if x.b != at {
        x.path.reverse();
        std::mem::swap(&mut x.a, &mut x.b);
    }
    if y.a != at {
        y.path.reverse();
        std::mem::swap(&mut y.a, &mut y.b);
    }
    let mut path = x.path;
    for p in y.path {
        if path.last() != Some(&p) {
            path.push(p);
        }
    }
    Branch { a: x.a, b: y.b, path }
}

/// Indices where a path turns by more than the threshold, one per turn.
fn turn_points(path: &[Pixel], window: usize, max_turn_deg: f64) -> Vec<usize> {
    let n = path.len();
    if window == 0 || n < 2 * window + 1 {
        return Vec::new();
    }
    let vec = |a: Pixel, b: Pixel| (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
    let turn: Vec<(usize, f64)> = (window..n - window)
        .map(|i| {
            let u = vec(path[i - window], path[i]);
            let v = vec(path[i], path[i + window]);
            let nu = (u.0 * u.0 + u.1 * u.1).sqrt();
            let nv = (v.0 * v.0 + v.1 * v.1).sqrt();
            let cos = if nu == 0.0 || nv == 0.0 {
                1.0
            } else {
                ((u.0 * v.0 + u.1 * v.1) / (nu * nv)).clamp(-1.0, 1.0)
            };
            (i, cos.acos().to_degrees())
        })
        .collect();
    let mut cuts = Vec::new();
    let mut run: Option<(usize, f64)> = None;
    for &(i, angle) in &turn {
        if angle > max_turn_deg {
            run = match run {
                Some((bi, ba)) if ba >= angle => Some((bi, ba)),
                _ => Some((i, angle)),
            };
        } else if let Some((bi, _)) = run.take() {
            cuts.push(bi);
        }
    }
    if let Some((bi, _)) = run {
        cuts.push(bi);
    }
    cuts
}

/// Orthogonal least-squares line through the pixels, clipped to the
/// projections of the first and last pixel.
pub fn fit_segment(pixels: &[Pixel], resolution_m: f64) -> Option<Segment> {
    if pixels.len() < 2 {
        return None;
    }
    let n = pixels.len() as f64;
    let mr = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mc = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let (mut srr, mut scc, mut src) = (0.0, 0.0, 0.0);
    for &(r, c) in pixels {
        let (dr, dc) = (r as f64 - mr, c as f64 - mc);
        srr += dr * dr;
        scc += dc * dc;
        src += dr * dc;
    }
    let phi = 0.5 * (2.0 * src).atan2(scc - srr);
    let (ur, uc) = (phi.sin(), phi.cos());
    let project = |p: Pixel| (p.0 as f64 - mr) * ur + (p.1 as f64 - mc) * uc;
    let t0 = project(pixels[0]);
    let t1 = project(pixels[pixels.len() - 1]);
    let start = (mr + t0 * ur, mc + t0 * uc);
    let end = (mr + t1 * ur, mc + t1 * uc);
    let len_px = (t1 - t0).abs();
    (len_px > 0.0).then_some(Segment {
        start,
        end,
        length_m: len_px * resolution_m,
    })
}

/// Centerline segments of a road region.
pub fn centerline_segments(
    road: &GeoObject,
    resolution_m: f64,
    params: &CenterlineParams,
) -> Vec<Segment> {
    if road.len() < 2 {
        return Vec::new();
    }
    segments_from_graph(&road_graph(&road.pixels, params), resolution_m, params)
}

/// Splits every branch of a road graph at sharp turns and fits each piece.
pub fn segments_from_graph(
    graph: &RoadGraph,
    resolution_m: f64,
    params: &CenterlineParams,
) -> Vec<Segment> {
    let mut out = Vec::new();
    let min_px = params.min_segment_px.max(params.min_segment_widths * graph.mean_width_px);
    for path in &graph.branches {
        let cuts = turn_points(path, params.turn_window_px, params.turn_angle_deg);
        let mut start = 0;
        for cut in cuts.into_iter().chain(std::iter::once(path.len() - 1)) {
            if let Some(seg) = fit_segment(&path[start..=cut], resolution_m) {
                if seg.length_m >= min_px * resolution_m {
                    out.push(seg);
                }
            }
            start = cut;
        }
    }
    out
}
