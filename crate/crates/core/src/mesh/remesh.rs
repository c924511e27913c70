//! Re-triangulation of an existing domain with its boundary kept in place.

use super::generate::{triangulate, Sizing};
use super::{BoundaryTag, MeshError, Point, TriMesh};

/// Re-triangulates the region bounded by the current tagged boundary.
///
/// Boundary nodes keep their exact coordinates. Interior crack nodes that a
/// descent step has bunched closer than `MERGE_FRACTION` of the local size are
/// dropped (the tip node is always kept); this is the only way the crack
/// polyline changes. Boundary segments much
/// longer than the local target size are split by collinear insertion, which
/// leaves the boundary polygon, and so the crack length and slit area,
/// unchanged. Interior nodes are regenerated with sizing graded from `h_tip`
/// at the crack tip (the crack node of minimal x) to `h_far`.
pub fn remesh(mesh: &TriMesh, h_far: f64, h_tip: f64) -> Result<TriMesh, MeshError> {
    let focus = mesh.tip_point().unwrap_or_else(|| Point::new(0.5, 0.5));
    let sizing = Sizing::new(h_far, h_tip, focus)?;
    let boundary = thin_crack(mesh, mesh.boundary_loop()?, &sizing);
    let n = boundary.len();

    let mut points: Vec<(Point, BoundaryTag)> = Vec::with_capacity(2 * n);
    for k in 0..n {
        let (a_idx, tag) = boundary[k];
        let b_idx = boundary[(k + 1) % n].0;
        let (a, b) = (mesh.nodes()[a_idx], mesh.nodes()[b_idx]);
        points.push((a, tag));
        let mid = 0.5 * (a + b);
        let pieces = ((b - a).norm() / sizing.at(mid)).round() as usize;
        for j in 1..pieces.max(1) {
            let t = j as f64 / pieces as f64;
            points.push((a + t * (b - a), tag));
        }
    }
    triangulate(&points, &sizing)
}

const MERGE_FRACTION: f64 = 0.3;

fn thin_crack(mesh: &TriMesh, boundary: Vec<(usize, BoundaryTag)>, sizing: &Sizing) -> Vec<(usize, BoundaryTag)> {
    let n = boundary.len();
    let tip = mesh.tip_node();
    let p = |k: usize| mesh.nodes()[boundary[k % n].0];
    // interior crack node: both incident boundary edges are crack edges
    let removable = |k: usize| {
        boundary[k].1 == BoundaryTag::Crack
            && boundary[(k + n - 1) % n].1 == BoundaryTag::Crack
            && Some(boundary[k].0) != tip
    };
    let mut kept: Vec<(usize, BoundaryTag)> = Vec::with_capacity(n);
    for k in 0..n {
        if removable(k) && !kept.is_empty() {
            let limit = MERGE_FRACTION * sizing.at(p(k));
            let prev = mesh.nodes()[kept[kept.len() - 1].0];
            let close_next = !removable((k + 1) % n) && (p(k + 1) - p(k)).norm() < limit;
            if (p(k) - prev).norm() < limit || close_next {
                continue;
            }
        }
        kept.push(boundary[k]);
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_notched_square, polygon_area};

    fn boundary_polygon_area(mesh: &TriMesh) -> f64 {
        let pts: Vec<Point> = mesh.boundary_loop().unwrap().iter().map(|(i, _)| mesh.nodes()[*i]).collect();
        polygon_area(&pts)
    }

    #[test]
    fn remesh_keeps_boundary() {
        let mesh = generate_notched_square(0.08, 0.005).unwrap();
        let again = remesh(&mesh, 0.08, 0.005).unwrap();
        let rel = (again.crack_length() - mesh.crack_length()).abs() / mesh.crack_length();
        assert!(rel <= 1e-12, "{rel}");
        let a0 = boundary_polygon_area(&mesh);
        let a1 = boundary_polygon_area(&again);
        assert!(((a1 - a0) / a0).abs() <= 1e-10);
        assert!((again.area() - a0).abs() / a0 <= 1e-10);
        for &i in mesh.crack_polyline() {
            let p = mesh.nodes()[i];
            assert!(again.crack_polyline().iter().any(|&j| again.nodes()[j] == p));
        }
        let twice = remesh(&again, 0.08, 0.005).unwrap();
        assert!(twice.mesh_quality() >= 0.2);
    }
}
