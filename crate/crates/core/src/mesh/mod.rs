//! Triangulated computational domain with a tagged boundary and an ordered
//! crack polyline.
//!
//! The domain is the unit square minus a slit. Its boundary is split into the
//! outer parts (`Bottom`, `Top`, `Left`, `Right`) and the crack curve, which is
//! stored as an ordered node list running from `P1` to `P2`. Walking the crack
//! from `P1` to `P2`, the domain lies on the right-hand side; the curve normal
//! (outward with respect to the domain) therefore points to the left and into
//! the slit.
//!
//! Meshes are immutable values. Every operation that changes geometry returns
//! a new [`TriMesh`].

mod generate;
mod msh;
mod remesh;

pub use generate::{generate_notched_square, generate_unit_square, Sizing};
pub use msh::read_msh;
pub use remesh::remesh;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector2;
use thiserror::Error;

use crate::fem::NodalVectorField;

/// A point or vector in the plane (mm).
pub type Point = Vector2<f64>;

/// Default far-field target edge length (mm).
pub const DEFAULT_H_FAR: f64 = 0.05;
/// Default target edge length near the crack tip (mm).
pub const DEFAULT_H_TIP: f64 = 0.005;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid sizing: {0}")]
    InvalidSizing(String),
    #[error("meshing failed: {0}")]
    MeshingFailure(String),
    #[error("malformed mesh file: {0}")]
    MalformedFile(String),
    #[error("unknown boundary tag `{0}`")]
    UnknownTag(String),
    #[error("crack edges do not form a single path: {0}")]
    DisconnectedCrack(String),
    #[error("degenerate crack segment {segment} (length {length:e})")]
    DegenerateSegment { segment: usize, length: f64 },
    #[error("element {element} inverted (signed area {area:e})")]
    ElementInversion { element: usize, area: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
}

/// Boundary part a boundary edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    Bottom,
    Top,
    Left,
    Right,
    Crack,
}

impl BoundaryTag {
    pub const ALL: [BoundaryTag; 5] = [
        BoundaryTag::Bottom,
        BoundaryTag::Top,
        BoundaryTag::Left,
        BoundaryTag::Right,
        BoundaryTag::Crack,
    ];

    /// Dirichlet part of the state problem (`Bottom` and `Top`).
    pub fn is_dirichlet(self) -> bool {
        matches!(self, BoundaryTag::Bottom | BoundaryTag::Top)
    }

    pub fn name(self) -> &'static str {
        match self {
            BoundaryTag::Bottom => "bottom",
            BoundaryTag::Top => "top",
            BoundaryTag::Left => "left",
            BoundaryTag::Right => "right",
            BoundaryTag::Crack => "crack",
        }
    }
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryTag {
    type Err = MeshError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        BoundaryTag::ALL
            .into_iter()
            .find(|t| t.name() == lower)
            .ok_or_else(|| MeshError::UnknownTag(s.to_string()))
    }
}

/// A boundary edge, oriented so that the domain lies on its left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// Per-crack-node geometry of the crack polyline.
#[derive(Debug, Clone)]
pub struct CurveGeometry {
    /// Unit normal at each crack node, outward from the domain (into the slit).
    pub normals: Vec<Point>,
    /// Signed discrete curvature at each crack node (1/mm).
    ///
    /// Positive where the curve bends away from its normal, so that the first
    /// variation of the polyline length is `sum_k curvature_k * weight_k * (W_k . n_k)`
    /// for interior nodes.
    pub curvature: Vec<f64>,
    /// Length of each crack segment (mm), `segment_lengths[k]` joins crack
    /// nodes `k` and `k + 1`.
    pub segment_lengths: Vec<f64>,
    /// Unit normal of each segment, outward from the domain.
    pub segment_normals: Vec<Point>,
}

impl CurveGeometry {
    /// Half the summed length of the segments adjacent to crack node `k`.
    pub fn dual_length(&self, k: usize) -> f64 {
        let left = if k > 0 { self.segment_lengths[k - 1] } else { 0.0 };
        let right = self.segment_lengths.get(k).copied().unwrap_or(0.0);
        0.5 * (left + right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    crack: Vec<usize>,
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Normalized radius ratio `2 r_in / r_circ` of a triangle.
pub fn triangle_quality(a: Point, b: Point, c: Point) -> f64 {
    let la = (b - c).norm();
    let lb = (c - a).norm();
    let lc = (a - b).norm();
    let area = signed_area(a, b, c).abs();
    let s = 0.5 * (la + lb + lc);
    if area <= 0.0 || s <= 0.0 {
        return 0.0;
    }
    let r_in = area / s;
    let r_circ = la * lb * lc / (4.0 * area);
    (2.0 * r_in / r_circ).clamp(0.0, 1.0)
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl TriMesh {
    /// Builds a mesh and checks every structural invariant.
    ///
    /// Triangles must be counterclockwise. Boundary edges may be given in
    /// either orientation; they are re-oriented so the domain is on their
    /// left. The crack polyline must run from `P1` to `P2` with the domain on
    /// its right.
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        crack: Vec<usize>,
    ) -> Result<Self, MeshError> {
        let n = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(MeshError::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::ElementInversion { element: t, area });
            }
        }

        // directed half-edges of all triangles
        let mut half_edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                if half_edges.insert((a, b), t).is_some() {
                    return Err(MeshError::InvalidMesh(format!("half-edge ({a},{b}) used twice")));
                }
                *edge_count.entry(edge_key(a, b)).or_default() += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(MeshError::InvalidMesh(format!("edge {e:?} shared by {c} triangles")));
        }

        let mut oriented = Vec::with_capacity(boundary_edges.len());
        let mut seen = HashMap::with_capacity(boundary_edges.len());
        for be in boundary_edges {
            let [a, b] = be.nodes;
            let key = edge_key(a, b);
            if edge_count.get(&key) != Some(&1) {
                return Err(MeshError::InvalidMesh(format!("tagged edge ({a},{b}) is not a boundary edge")));
            }
            if seen.insert(key, be.tag).is_some() {
                return Err(MeshError::InvalidMesh(format!("edge ({a},{b}) tagged twice")));
            }
            let nodes = if half_edges.contains_key(&(a, b)) { [a, b] } else { [b, a] };
            oriented.push(BoundaryEdge { nodes, tag: be.tag });
        }
        let n_boundary = edge_count.values().filter(|&&c| c == 1).count();
        if n_boundary != oriented.len() {
            return Err(MeshError::InvalidMesh(format!(
                "{} boundary edges but {} tagged",
                n_boundary,
                oriented.len()
            )));
        }

        let mesh = TriMesh { nodes, triangles, boundary_edges: oriented, crack };
        mesh.check_crack(&seen)?;
        Ok(mesh)
    }

    fn check_crack(&self, tags: &HashMap<(usize, usize), BoundaryTag>) -> Result<(), MeshError> {
        let n_crack_edges = self.boundary_edges.iter().filter(|e| e.tag == BoundaryTag::Crack).count();
        if self.crack.is_empty() {
            return if n_crack_edges == 0 {
                Ok(())
            } else {
                Err(MeshError::DisconnectedCrack("crack edges present but no polyline".into()))
            };
        }
        if self.crack.len() != n_crack_edges + 1 {
            return Err(MeshError::DisconnectedCrack(format!(
                "polyline has {} nodes for {} crack edges",
                self.crack.len(),
                n_crack_edges
            )));
        }
        let mut distinct = self.crack.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != self.crack.len() {
            return Err(MeshError::DisconnectedCrack("polyline revisits a node".into()));
        }
        let directed: HashMap<(usize, usize), BoundaryTag> =
            self.boundary_edges.iter().map(|e| ((e.nodes[0], e.nodes[1]), e.tag)).collect();
        for w in self.crack.windows(2) {
            if tags.get(&edge_key(w[0], w[1])) != Some(&BoundaryTag::Crack) {
                return Err(MeshError::DisconnectedCrack(format!("({},{}) is not a crack edge", w[0], w[1])));
            }
            if !directed.contains_key(&(w[1], w[0])) {
                return Err(MeshError::InvalidMesh("crack polyline must keep the domain on its right".into()));
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Crack node indices ordered from `P1` to `P2`.
    pub fn crack_polyline(&self) -> &[usize] {
        &self.crack
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Node flags for every node on an edge carrying one of `tags`.
    pub fn nodes_with_tags(&self, tags: &[BoundaryTag]) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        for e in &self.boundary_edges {
            if tags.contains(&e.tag) {
                flags[e.nodes[0]] = true;
                flags[e.nodes[1]] = true;
            }
        }
        flags
    }

    /// Flags for nodes on the outer boundary, i.e. every boundary part except
    /// the crack. `P1` and `P2` are included.
    pub fn outer_boundary_nodes(&self) -> Vec<bool> {
        self.nodes_with_tags(&[BoundaryTag::Bottom, BoundaryTag::Top, BoundaryTag::Left, BoundaryTag::Right])
    }

    /// Mean length over all distinct mesh edges.
    pub fn mean_edge_length(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for tri in &self.triangles {
            for i in 0..3 {
                let (a, b) = (tri[i], tri[(i + 1) % 3]);
                // count interior edges once (from the smaller index), boundary edges below
                if a < b {
                    total += (self.nodes[a] - self.nodes[b]).norm();
                    count += 1;
                }
            }
        }
        // a boundary edge (a,b) with a > b was skipped above
        for e in &self.boundary_edges {
            if e.nodes[0] > e.nodes[1] {
                total += (self.nodes[e.nodes[0]] - self.nodes[e.nodes[1]]).norm();
                count += 1;
            }
        }
        total / count as f64
    }

    /// Number of triangles sharing each undirected edge.
    pub fn edge_triangle_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::with_capacity(3 * self.triangles.len());
        for tri in &self.triangles {
            for i in 0..3 {
                *counts.entry(edge_key(tri[i], tri[(i + 1) % 3])).or_insert(0) += 1;
            }
        }
        counts
    }

    /// The closed boundary loop in counterclockwise order (domain on the
    /// left), as `(node, tag of the edge leaving node)` pairs.
    ///
    /// Fails if the boundary is not a single loop.
    pub fn boundary_loop(&self) -> Result<Vec<(usize, BoundaryTag)>, MeshError> {
        let next: HashMap<usize, (usize, BoundaryTag)> =
            self.boundary_edges.iter().map(|e| (e.nodes[0], (e.nodes[1], e.tag))).collect();
        if next.len() != self.boundary_edges.len() {
            return Err(MeshError::MeshingFailure("boundary is not a simple loop".into()));
        }
        let start = self
            .boundary_edges
            .iter()
            .map(|e| e.nodes[0])
            .min()
            .ok_or_else(|| MeshError::MeshingFailure("mesh has no boundary".into()))?;
        let mut out = Vec::with_capacity(self.boundary_edges.len());
        let mut cur = start;
        loop {
            let &(nxt, tag) = next
                .get(&cur)
                .ok_or_else(|| MeshError::MeshingFailure("open boundary chain".into()))?;
            out.push((cur, tag));
            cur = nxt;
            if cur == start {
                break;
            }
            if out.len() > self.boundary_edges.len() {
                return Err(MeshError::MeshingFailure("boundary loop does not close".into()));
            }
        }
        if out.len() != self.boundary_edges.len() {
            return Err(MeshError::MeshingFailure("boundary has more than one loop".into()));
        }
        Ok(out)
    }

    /// Crack node with minimal x-coordinate (first one on ties).
    pub fn tip_node(&self) -> Option<usize> {
        self.crack.iter().copied().min_by(|&a, &b| {
            self.nodes[a].x.partial_cmp(&self.nodes[b].x).unwrap_or(std::cmp::Ordering::Equal)
        })
    }

    pub fn tip_point(&self) -> Option<Point> {
        self.tip_node().map(|i| self.nodes[i])
    }

    /// Sum of the crack segment lengths (mm).
    pub fn crack_length(&self) -> f64 {
        self.crack.windows(2).map(|w| (self.nodes[w[1]] - self.nodes[w[0]]).norm()).sum()
    }

    /// Area of the slit region enclosed by the crack polyline and the
    /// straight closing segment from `P2` back to `P1` (shoelace formula).
    pub fn slit_area(&self) -> f64 {
        let m = self.crack.len();
        if m < 3 {
            return 0.0;
        }
        let mut twice = 0.0;
        for k in 0..m {
            let a = self.nodes[self.crack[k]];
            let b = self.nodes[self.crack[(k + 1) % m]];
            twice += a.x * b.y - b.x * a.y;
        }
        0.5 * twice
    }

    pub fn curve_geometry(&self) -> Result<CurveGeometry, MeshError> {
        curve_geometry_of(&self.crack.iter().map(|&i| self.nodes[i]).collect::<Vec<_>>())
    }

    /// Minimum normalized radius ratio over all triangles.
    pub fn mesh_quality(&self) -> f64 {
        self.triangle_qualities().into_iter().fold(1.0, f64::min)
    }

    pub fn triangle_qualities(&self) -> Vec<f64> {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                triangle_quality(a, b, c)
            })
            .collect()
    }

    /// Moves every node by `step * field`. Connectivity and tags are kept.
    pub fn deform(&self, field: &NodalVectorField, step: f64) -> Result<TriMesh, MeshError> {
        if field.len() != self.nodes.len() {
            return Err(MeshError::InvalidMesh(format!(
                "field has {} entries for {} nodes",
                field.len(),
                self.nodes.len()
            )));
        }
        let nodes: Vec<Point> = self.nodes.iter().zip(field.iter()).map(|(x, v)| x + step * v).collect();
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(area > 0.0) {
                return Err(MeshError::ElementInversion { element: t, area });
            }
        }
        Ok(TriMesh { nodes, ..self.clone() })
    }

    /// Splits every triangle into four through its edge midpoints.
    ///
    /// Boundary midpoints are inserted on the straight boundary segments, so
    /// the boundary polygon (and the crack geometry) is unchanged.
    pub fn refine_uniform(&self) -> TriMesh {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *mid.entry(edge_key(a, b)).or_insert_with(|| {
                nodes.push(0.5 * (nodes[a] + nodes[b]));
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        let mut boundary_edges = Vec::with_capacity(2 * self.boundary_edges.len());
        for e in &self.boundary_edges {
            let m = midpoint(e.nodes[0], e.nodes[1], &mut nodes);
            boundary_edges.push(BoundaryEdge { nodes: [e.nodes[0], m], tag: e.tag });
            boundary_edges.push(BoundaryEdge { nodes: [m, e.nodes[1]], tag: e.tag });
        }
        let mut crack = Vec::with_capacity(2 * self.crack.len());
        for (k, w) in self.crack.windows(2).enumerate() {
            if k == 0 {
                crack.push(w[0]);
            }
            crack.push(midpoint(w[0], w[1], &mut nodes));
            crack.push(w[1]);
        }
        TriMesh { nodes, triangles, boundary_edges, crack }
    }

    /// Mesh nodes at the ends of crack segments that cross another segment.
    pub fn crack_crossings(&self) -> Vec<usize> {
        let pts: Vec<Point> = self.crack.iter().map(|&i| self.nodes[i]).collect();
        polyline_crossings(&pts).into_iter().map(|k| self.crack[k]).collect()
    }
}

/// Positions of polyline vertices bounding a segment that properly crosses a
/// non-adjacent segment.
pub fn polyline_crossings(pts: &[Point]) -> Vec<usize> {
    let m = pts.len();
    let mut hit = vec![false; m];
    for i in 0..m.saturating_sub(1) {
        for j in (i + 2)..m.saturating_sub(1) {
            if segments_intersect(pts[i], pts[i + 1], pts[j], pts[j + 1]) {
                for k in [i, i + 1, j, j + 1] {
                    hit[k] = true;
                }
            }
        }
    }
    (0..m).filter(|&k| hit[k]).collect()
}

pub(crate) fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = signed_area(q1, q2, p1);
    let d2 = signed_area(q1, q2, p2);
    let d3 = signed_area(p1, p2, q1);
    let d4 = signed_area(p1, p2, q2);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn left_perp(v: Point) -> Point {
    Point::new(-v.y, v.x)
}

/// Normals and curvature of an open polyline whose normal is the left
/// perpendicular of its direction of travel.
///
/// The nodal normal is the normalized sum of the adjacent segment normals.
/// The nodal curvature is `-2 sin(theta / 2) / s`, with `theta` the signed
/// turning angle (positive for left turns) and `s` half the summed adjacent
/// segment lengths. On a regular polygon inscribed in a circle of radius `r`
/// this is exactly `1/r` in magnitude. Endpoints copy the value of their
/// neighbour and use the normal of their single segment.
pub fn curve_geometry_of(points: &[Point]) -> Result<CurveGeometry, MeshError> {
    let m = points.len();
    if m < 3 {
        return Err(MeshError::InvalidMesh(format!("crack polyline has {m} nodes, need at least 3")));
    }
    let mut segment_lengths = Vec::with_capacity(m - 1);
    let mut tangents = Vec::with_capacity(m - 1);
    for (k, w) in points.windows(2).enumerate() {
        let d = w[1] - w[0];
        let length = d.norm();
        if length < 1e-14 {
            return Err(MeshError::DegenerateSegment { segment: k, length });
        }
        segment_lengths.push(length);
        tangents.push(d / length);
    }
    let segment_normals: Vec<Point> = tangents.iter().map(|&t| left_perp(t)).collect();

    let mut normals = Vec::with_capacity(m);
    let mut curvature = Vec::with_capacity(m);
    normals.push(segment_normals[0]);
    curvature.push(0.0);
    for k in 1..m - 1 {
        let (t0, t1) = (tangents[k - 1], tangents[k]);
        let sum = segment_normals[k - 1] + segment_normals[k];
        let norm = sum.norm();
        // a full reversal has no bisector; fall back to the incoming segment
        let n = if norm > 1e-12 { sum / norm } else { segment_normals[k - 1] };
        let theta = (t0.x * t1.y - t0.y * t1.x).atan2(t0.dot(&t1));
        let s = 0.5 * (segment_lengths[k - 1] + segment_lengths[k]);
        normals.push(n);
        curvature.push(-2.0 * (0.5 * theta).sin() / s);
    }
    normals.push(segment_normals[m - 2]);
    curvature.push(curvature[m - 2]);
    curvature[0] = curvature[1];

    Ok(CurveGeometry { normals, curvature, segment_lengths, segment_normals })
}

/// Shoelace area of a closed polygon (positive when counterclockwise).
pub fn polygon_area(points: &[Point]) -> f64 {
    let m = points.len();
    (0..m)
        .map(|k| {
            let (a, b) = (points[k], points[(k + 1) % m]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn single_triangle(c: Point) -> TriMesh {
        let nodes = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), c];
        let edges = vec![
            BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Bottom },
            BoundaryEdge { nodes: [1, 2], tag: BoundaryTag::Right },
            BoundaryEdge { nodes: [2, 0], tag: BoundaryTag::Left },
        ];
        TriMesh::new(nodes, vec![[0, 1, 2]], edges, vec![]).unwrap()
    }

    #[test]
    fn quality_of_reference_triangles() {
        let eq = single_triangle(Point::new(0.5, 3f64.sqrt() / 2.0));
        assert!((eq.mesh_quality() - 1.0).abs() < 1e-12);

        // r_in = A/s = 0.5 / (1 + sqrt(2)/2), r_circ = sqrt(2)/2
        let right = single_triangle(Point::new(0.0, 1.0));
        let expected = 2.0 * (0.5 / (1.0 + 0.5 * 2f64.sqrt())) / (0.5 * 2f64.sqrt());
        assert!((expected - 0.8284).abs() < 1e-3);
        assert!((right.mesh_quality() - expected).abs() < 1e-12);

        let flat = single_triangle(Point::new(0.5, 1e-5));
        assert!(flat.mesh_quality() < 1e-3);
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let nodes = vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 0.0)];
        let err = TriMesh::new(nodes, vec![[0, 1, 2]], vec![], vec![]).unwrap_err();
        assert!(matches!(err, MeshError::ElementInversion { .. }));
    }

    #[test]
    fn untagged_boundary_rejected() {
        let nodes = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        let edges = vec![BoundaryEdge { nodes: [0, 1], tag: BoundaryTag::Bottom }];
        assert!(TriMesh::new(nodes, vec![[0, 1, 2]], edges, vec![]).is_err());
    }

    #[test]
    fn deform_inversion_detected() {
        let mesh = single_triangle(Point::new(0.5, 1.0));
        let field = NodalVectorField::from(vec![Point::zeros(), Point::zeros(), Point::new(0.0, -2.0)]);
        let err = mesh.deform(&field, 1.0).unwrap_err();
        assert!(matches!(err, MeshError::ElementInversion { .. }));
        assert_eq!(mesh.deform(&field, 0.0).unwrap(), mesh);
        assert_eq!(mesh.deform(&NodalVectorField::zeros(3), 1.0).unwrap(), mesh);
    }

    #[test]
    fn straight_polyline_has_zero_curvature() {
        let pts: Vec<Point> = (0..5).map(|i| Point::new(1.0 - 0.25 * i as f64, 0.5)).collect();
        let g = curve_geometry_of(&pts).unwrap();
        for k in 1..4 {
            assert!(g.curvature[k].abs() < 1e-12);
            assert!((g.normals[k] - Point::new(0.0, -1.0)).norm() < 1e-12);
        }
        let total: f64 = g.segment_lengths.iter().sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn circle_curvature_matches_inverse_radius() {
        // clockwise sampling: the left normal points away from the centre
        let r = 0.01;
        let pts: Vec<Point> = (0..=20)
            .map(|i| {
                let phi = PI - PI * i as f64 / 20.0;
                Point::new(0.5 + r * phi.cos(), 0.5 + r * phi.sin())
            })
            .collect();
        let g = curve_geometry_of(&pts).unwrap();
        for k in 1..20 {
            assert!((g.curvature[k] - 100.0).abs() < 2.0, "k={k} kappa={}", g.curvature[k]);
            let outward = (pts[k] - Point::new(0.5, 0.5)).normalize();
            assert!((g.normals[k] - outward).norm() < 1e-12);
        }
        for n in &g.normals {
            assert!((n.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn crossings_of_folded_polyline() {
        let p = |x, y| Point::new(x, y);
        let open = [p(1.0, 0.51), p(0.5, 0.51), p(0.49, 0.5), p(0.5, 0.49), p(1.0, 0.49)];
        assert!(polyline_crossings(&open).is_empty());
        // lower face pushed through the upper one
        let folded = [p(1.0, 0.51), p(0.5, 0.51), p(0.49, 0.5), p(0.6, 0.52), p(1.0, 0.49)];
        assert_eq!(polyline_crossings(&folded), vec![0, 1, 2, 3, 4]);
        // touching without crossing is allowed
        let touching = [p(1.0, 0.51), p(0.5, 0.51), p(0.49, 0.5), p(0.6, 0.51), p(1.0, 0.49)];
        assert!(polyline_crossings(&touching).is_empty());
    }

    #[test]
    fn degenerate_segment_reported() {
        let pts = vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        assert!(matches!(curve_geometry_of(&pts), Err(MeshError::DegenerateSegment { segment: 0, .. })));
    }

    #[test]
    fn tag_names_parse_case_insensitively() {
        assert_eq!("Crack".parse::<BoundaryTag>().unwrap(), BoundaryTag::Crack);
        assert_eq!("TOP".parse::<BoundaryTag>().unwrap(), BoundaryTag::Top);
        assert!(matches!("hole".parse::<BoundaryTag>(), Err(MeshError::UnknownTag(_))));
    }
}
