//! Sizing-driven triangulation of a polygonal domain.
//!
//! Boundary vertices are fixed. Interior vertices are placed by greedy
//! spacing-constrained sampling on a quadtree of candidate sites, triangulated
//! with a constrained Delaunay triangulation, and relaxed by a few rounds of
//! quality-guarded Laplacian smoothing.

use std::f64::consts::PI;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{signed_area, triangle_quality, BoundaryEdge, BoundaryTag, MeshError, Point, TriMesh};

/// Target edge length field: `h_tip` at the focus point, growing linearly with
/// distance at rate `grade`, capped at `h_far`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sizing {
    pub h_far: f64,
    pub h_tip: f64,
    pub grade: f64,
    pub focus: Point,
}

/// Growth rate of the default sizing field away from the tip.
pub const DEFAULT_GRADE: f64 = 0.085;

// minimum spacing between interior vertices, relative to the local size
const SPACING: f64 = 0.86;
// minimum distance of interior vertices from boundary segments
const BOUNDARY_CLEARANCE: f64 = 0.6;
const SMOOTHING_ROUNDS: usize = 6;

impl Sizing {
    pub fn new(h_far: f64, h_tip: f64, focus: Point) -> Result<Self, MeshError> {
        if !(h_tip > 0.0 && h_tip <= h_far && h_far.is_finite()) {
            return Err(MeshError::InvalidSizing(format!(
                "need 0 < h_tip <= h_far, got h_far={h_far}, h_tip={h_tip}"
            )));
        }
        Ok(Sizing { h_far, h_tip, grade: DEFAULT_GRADE, focus })
    }

    pub fn at(&self, p: Point) -> f64 {
        (self.h_tip + self.grade * (p - self.focus).norm()).min(self.h_far)
    }
}

/// Points strictly between `a` and `b` (plus `b` itself) spaced according to
/// the sizing field, parameterized by `path(s)` for `s` in `[0, 1]`.
fn discretize_path(path: impl Fn(f64) -> Point, length: f64, sizing: &Sizing) -> Vec<Point> {
    const SAMPLES: usize = 400;
    let mut cumulative = Vec::with_capacity(SAMPLES + 1);
    cumulative.push(0.0);
    for i in 0..SAMPLES {
        let s = (i as f64 + 0.5) / SAMPLES as f64;
        let prev = *cumulative.last().unwrap();
        cumulative.push(prev + length / SAMPLES as f64 / sizing.at(path(s)));
    }
    let total = cumulative[SAMPLES];
    let n = (total.round() as usize).max(1);
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for k in 1..n {
        let target = total * k as f64 / n as f64;
        while cumulative[j + 1] < target {
            j += 1;
        }
        let frac = (target - cumulative[j]) / (cumulative[j + 1] - cumulative[j]);
        out.push(path((j as f64 + frac) / SAMPLES as f64));
    }
    out.push(path(1.0));
    out
}

fn discretize_segment(a: Point, b: Point, sizing: &Sizing) -> Vec<Point> {
    discretize_path(|s| a + s * (b - a), (b - a).norm(), sizing)
}

/// Unit square mesh with the four sides tagged, no crack.
pub fn generate_unit_square(h: f64) -> Result<TriMesh, MeshError> {
    let sizing = Sizing::new(h, h, Point::new(0.5, 0.5))?;
    let corners = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(1.0, 1.0), Point::new(0.0, 1.0)];
    let tags = [BoundaryTag::Bottom, BoundaryTag::Right, BoundaryTag::Top, BoundaryTag::Left];
    let mut boundary = Vec::new();
    for i in 0..4 {
        let a = corners[i];
        let b = corners[(i + 1) % 4];
        let mut prev = a;
        for p in discretize_segment(a, b, &sizing) {
            boundary.push((prev, tags[i]));
            prev = p;
        }
    }
    triangulate(&boundary, &sizing)
}

/// Triangulates the notched unit square: the slit runs from `P1 = (1, 0.51)`
/// to `(0.5, 0.51)`, around a semicircular tip of radius 0.01 centred at
/// `(0.5, 0.5)`, and back from `(0.5, 0.49)` to `P2 = (1, 0.49)`.
pub fn generate_notched_square(h_far: f64, h_tip: f64) -> Result<TriMesh, MeshError> {
    let radius = 0.01;
    if !(h_tip > 0.0 && h_tip <= h_far && h_tip < radius) {
        return Err(MeshError::InvalidSizing(format!(
            "need 0 < h_tip <= h_far and h_tip < {radius}, got h_far={h_far}, h_tip={h_tip}"
        )));
    }
    let centre = Point::new(0.5, 0.5);
    let sizing = Sizing::new(h_far, h_tip, Point::new(0.5 - radius, 0.5))?;

    let p1 = Point::new(1.0, 0.51);
    let p2 = Point::new(1.0, 0.49);
    let upper_end = Point::new(0.5, 0.51);
    let lower_start = Point::new(0.5, 0.49);

    // counterclockwise around the domain, starting at the origin
    let mut boundary: Vec<(Point, BoundaryTag)> = Vec::new();
    let push_piece = |start: Point, pts: Vec<Point>, tag: BoundaryTag, boundary: &mut Vec<(Point, BoundaryTag)>| {
        let mut prev = start;
        for p in pts {
            boundary.push((prev, tag));
            prev = p;
        }
    };
    let origin = Point::new(0.0, 0.0);
    let bottom_right = Point::new(1.0, 0.0);
    let top_right = Point::new(1.0, 1.0);
    let top_left = Point::new(0.0, 1.0);
    push_piece(origin, discretize_segment(origin, bottom_right, &sizing), BoundaryTag::Bottom, &mut boundary);
    push_piece(bottom_right, discretize_segment(bottom_right, p2, &sizing), BoundaryTag::Right, &mut boundary);
    push_piece(p2, discretize_segment(p2, lower_start, &sizing), BoundaryTag::Crack, &mut boundary);
    // clockwise around the tip centre, from angle -pi/2 through pi to pi/2
    let arc = discretize_path(
        |s| {
            let phi = -0.5 * PI - PI * s;
            if s == 1.0 {
                upper_end
            } else {
                centre + radius * Point::new(phi.cos(), phi.sin())
            }
        },
        PI * radius,
        &sizing,
    );
    push_piece(lower_start, arc, BoundaryTag::Crack, &mut boundary);
    push_piece(upper_end, discretize_segment(upper_end, p1, &sizing), BoundaryTag::Crack, &mut boundary);
    push_piece(p1, discretize_segment(p1, top_right, &sizing), BoundaryTag::Right, &mut boundary);
    push_piece(top_right, discretize_segment(top_right, top_left, &sizing), BoundaryTag::Top, &mut boundary);
    push_piece(top_left, discretize_segment(top_left, origin, &sizing), BoundaryTag::Left, &mut boundary);

    triangulate(&boundary, &sizing)
}

/// Bucket grid over boundary segments for distance queries.
struct SegmentGrid {
    cell: f64,
    origin: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
    segments: Vec<(Point, Point)>,
}

impl SegmentGrid {
    fn new(segments: Vec<(Point, Point)>, cell: f64) -> Self {
        let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
        for (a, b) in &segments {
            lo = lo.inf(a).inf(b);
            hi = hi.sup(a).sup(b);
        }
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        let mut grid = SegmentGrid { cell, origin: lo, nx, ny, buckets: vec![Vec::new(); nx * ny], segments };
        for (i, &(a, b)) in grid.segments.clone().iter().enumerate() {
            let (i0, j0) = grid.cell_of(a.inf(&b));
            let (i1, j1) = grid.cell_of(a.sup(&b));
            for j in j0..=j1 {
                for ii in i0..=i1 {
                    grid.buckets[j * nx + ii].push(i);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let i = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Distance from `p` to the nearest segment, searching only within `radius`
    /// (returns `radius` or more when nothing is closer).
    fn distance_within(&self, p: Point, radius: f64) -> f64 {
        let (i0, j0) = self.cell_of(p - Point::repeat(radius));
        let (i1, j1) = self.cell_of(p + Point::repeat(radius));
        let mut best = f64::INFINITY;
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &s in &self.buckets[j * self.nx + i] {
                    let (a, b) = self.segments[s];
                    best = best.min(point_segment_distance(p, a, b));
                }
            }
        }
        best
    }
}

pub(crate) fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + t * d)).norm()
}

/// Winding-number containment test against a closed polygon.
pub(crate) fn point_in_polygon(p: Point, polygon: &[Point]) -> bool {
    let m = polygon.len();
    let mut winding = 0i32;
    for k in 0..m {
        let a = polygon[k];
        let b = polygon[(k + 1) % m];
        if a.y <= p.y {
            if b.y > p.y && signed_area(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && signed_area(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Accepted-point hash for minimum-spacing checks.
struct PointGrid {
    cell: f64,
    origin: Point,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<Point>>,
}

impl PointGrid {
    fn new(lo: Point, hi: Point, cell: f64) -> Self {
        let nx = (((hi.x - lo.x) / cell).ceil() as usize).max(1);
        let ny = (((hi.y - lo.y) / cell).ceil() as usize).max(1);
        PointGrid { cell, origin: lo, nx, ny, buckets: vec![Vec::new(); nx * ny] }
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let i = ((p.x - self.origin.x) / self.cell).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.y - self.origin.y) / self.cell).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    fn insert(&mut self, p: Point) {
        let (i, j) = self.cell_of(p);
        self.buckets[j * self.nx + i].push(p);
    }

    fn any_within(&self, p: Point, radius: f64) -> bool {
        let (i0, j0) = self.cell_of(p - Point::repeat(radius));
        let (i1, j1) = self.cell_of(p + Point::repeat(radius));
        let r2 = radius * radius;
        for j in j0..=j1 {
            for i in i0..=i1 {
                if self.buckets[j * self.nx + i].iter().any(|q| (q - p).norm_squared() < r2) {
                    return true;
                }
            }
        }
        false
    }
}

fn interior_points(polygon: &[Point], grid: &SegmentGrid, sizing: &Sizing) -> Vec<Point> {
    let (mut lo, mut hi) = (Point::repeat(f64::INFINITY), Point::repeat(f64::NEG_INFINITY));
    for p in polygon {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let side = (hi - lo).max();

    // quadtree leaves sized to half the local target length
    let mut candidates = Vec::new();
    let mut stack = vec![(lo, side)];
    while let Some((corner, size)) = stack.pop() {
        let centre = corner + Point::repeat(0.5 * size);
        let h_min = (sizing.at(centre) - sizing.grade * size).max(sizing.h_tip);
        if size > 0.5 * h_min {
            let half = 0.5 * size;
            for (dx, dy) in [(0.0, 0.0), (half, 0.0), (0.0, half), (half, half)] {
                stack.push((corner + Point::new(dx, dy), half));
            }
        } else if centre.x < hi.x && centre.y < hi.y {
            candidates.push(centre);
        }
    }

    let mut scored: Vec<(f64, Point)> = candidates
        .into_iter()
        .filter_map(|p| {
            let h = sizing.at(p);
            if grid.distance_within(p, BOUNDARY_CLEARANCE * h) < BOUNDARY_CLEARANCE * h {
                return None;
            }
            point_in_polygon(p, polygon).then_some((h, p))
        })
        .collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(a.1.y.partial_cmp(&b.1.y).unwrap())
            .then(a.1.x.partial_cmp(&b.1.x).unwrap())
    });

    let mut accepted = PointGrid::new(lo, hi, sizing.h_tip.max(sizing.h_far / 8.0));
    for p in polygon {
        accepted.insert(*p);
    }
    let mut out = Vec::new();
    for (h, p) in scored {
        if !accepted.any_within(p, SPACING * h) {
            accepted.insert(p);
            out.push(p);
        }
    }
    out
}

/// Triangles of the constrained Delaunay triangulation lying inside the
/// boundary polygon. The first `polygon.len()` points are the boundary loop.
fn constrained_triangles(points: &[Point], n_boundary: usize) -> Result<Vec<[usize; 3]>, MeshError> {
    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p.x, p.y)).collect();
    let edges: Vec<[usize; 2]> = (0..n_boundary).map(|k| [k, (k + 1) % n_boundary]).collect();
    let mut conflict = false;
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::try_bulk_load_cdt(vertices, edges, |_| conflict = true)
        .map_err(|e| MeshError::MeshingFailure(format!("triangulation failed: {e:?}")))?;
    if conflict {
        return Err(MeshError::MeshingFailure("boundary polygon self-intersects".into()));
    }
    if cdt.num_vertices() != points.len() {
        return Err(MeshError::MeshingFailure("duplicate vertices in triangulation input".into()));
    }
    let polygon = &points[..n_boundary];
    let mut triangles = Vec::with_capacity(2 * points.len());
    for face in cdt.inner_faces() {
        let [a, b, c] = face.vertices().map(|v| v.fix().index());
        let centroid = (points[a] + points[b] + points[c]) / 3.0;
        if !point_in_polygon(centroid, polygon) {
            continue;
        }
        let area = signed_area(points[a], points[b], points[c]);
        if area > 0.0 {
            triangles.push([a, b, c]);
        } else if area < 0.0 {
            triangles.push([a, c, b]);
        } else {
            return Err(MeshError::MeshingFailure("zero-area triangle produced".into()));
        }
    }
    Ok(triangles)
}

fn star_quality(points: &[Point], stars: &[Vec<usize>], triangles: &[[usize; 3]], node: usize, at: Point) -> f64 {
    let mut worst = f64::INFINITY;
    for &t in &stars[node] {
        let mut pts = triangles[t].map(|v| points[v]);
        for (k, &v) in triangles[t].iter().enumerate() {
            if v == node {
                pts[k] = at;
            }
        }
        if signed_area(pts[0], pts[1], pts[2]) <= 0.0 {
            return -1.0;
        }
        worst = worst.min(triangle_quality(pts[0], pts[1], pts[2]));
    }
    worst
}

fn smooth(points: &mut [Point], n_boundary: usize, triangles: &[[usize; 3]]) {
    let n = points.len();
    let mut stars = vec![Vec::new(); n];
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            stars[tri[k]].push(t);
            neighbours[tri[k]].push(tri[(k + 1) % 3]);
            neighbours[tri[k]].push(tri[(k + 2) % 3]);
        }
    }
    for list in &mut neighbours {
        list.sort_unstable();
        list.dedup();
    }
    for i in n_boundary..n {
        if neighbours[i].is_empty() {
            continue;
        }
        let target = neighbours[i].iter().map(|&j| points[j]).sum::<Point>() / neighbours[i].len() as f64;
        let before = star_quality(points, &stars, triangles, i, points[i]);
        let after = star_quality(points, &stars, triangles, i, target);
        if after > before {
            points[i] = target;
        }
    }
}

/// Meshes the polygon given as a counterclockwise loop of `(vertex, tag of
/// the edge leaving the vertex)`. The crack polyline is the run of `Crack`
/// edges, reversed so that it keeps the domain on its right.
pub(crate) fn triangulate(boundary: &[(Point, BoundaryTag)], sizing: &Sizing) -> Result<TriMesh, MeshError> {
    let n_boundary = boundary.len();
    if n_boundary < 3 {
        return Err(MeshError::MeshingFailure("boundary has fewer than 3 vertices".into()));
    }
    let polygon: Vec<Point> = boundary.iter().map(|(p, _)| *p).collect();
    let segments: Vec<(Point, Point)> = (0..n_boundary).map(|k| (polygon[k], polygon[(k + 1) % n_boundary])).collect();
    let grid = SegmentGrid::new(segments, sizing.h_far.max(sizing.h_tip * 4.0));

    let mut points = polygon.clone();
    points.extend(interior_points(&polygon, &grid, sizing));

    let mut triangles = constrained_triangles(&points, n_boundary)?;
    for _ in 0..SMOOTHING_ROUNDS {
        smooth(&mut points, n_boundary, &triangles);
        triangles = constrained_triangles(&points, n_boundary)?;
    }

    // drop interior vertices that ended up without triangles
    let mut used = vec![false; points.len()];
    for tri in &triangles {
        for &v in tri {
            used[v] = true;
        }
    }
    if used[..n_boundary].iter().any(|u| !u) {
        return Err(MeshError::MeshingFailure("boundary vertex left out of the triangulation".into()));
    }
    let mut remap = vec![usize::MAX; points.len()];
    let mut nodes = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if used[i] {
            remap[i] = nodes.len();
            nodes.push(*p);
        }
    }
    let triangles: Vec<[usize; 3]> = triangles.iter().map(|t| t.map(|v| remap[v])).collect();

    let boundary_edges: Vec<BoundaryEdge> = (0..n_boundary)
        .map(|k| BoundaryEdge { nodes: [k, (k + 1) % n_boundary], tag: boundary[k].1 })
        .collect();
    let crack = crack_from_loop(boundary)?;
    TriMesh::new(nodes, triangles, boundary_edges, crack)
}

/// Crack node indices (into the loop) from `P1` to `P2`.
fn crack_from_loop(boundary: &[(Point, BoundaryTag)]) -> Result<Vec<usize>, MeshError> {
    let n = boundary.len();
    let is_crack: Vec<bool> = boundary.iter().map(|(_, t)| *t == BoundaryTag::Crack).collect();
    let n_crack = is_crack.iter().filter(|&&c| c).count();
    if n_crack == 0 {
        return Ok(Vec::new());
    }
    if n_crack == n {
        return Err(MeshError::DisconnectedCrack("whole boundary tagged as crack".into()));
    }
    // first crack edge whose predecessor is not a crack edge
    let start = (0..n)
        .find(|&k| is_crack[k] && !is_crack[(k + n - 1) % n])
        .ok_or_else(|| MeshError::DisconnectedCrack("no crack start".into()))?;
    let mut chain = vec![start];
    let mut k = start;
    while is_crack[k] {
        k = (k + 1) % n;
        chain.push(k);
    }
    if chain.len() - 1 != n_crack {
        return Err(MeshError::DisconnectedCrack("crack edges form more than one path".into()));
    }
    chain.reverse();
    Ok(chain)
}
