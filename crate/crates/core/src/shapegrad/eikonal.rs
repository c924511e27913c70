//! Viscosity-stabilized Eikonal solve and the extended crack normal.
//!
//! `−ε ΔΦ + |∇Φ| = 1` with `Φ = 0` on a node polyline and zero flux elsewhere.
//! Each Picard step freezes the transport direction `b = ∇Φ_k / |∇Φ_k|` per
//! triangle, which turns `|∇Φ|` into `b · ∇Φ` and leaves a linear
//! advection-diffusion problem. The update is damped.

use crate::fem::{shape_gradients, NodalVectorField};
use crate::linalg::{CsrMatrix, LuSolver};
use crate::mesh::{Point, TriMesh};

use super::{NodalScalarField, ShapeError};

pub const EIKONAL_DAMPING: f64 = 0.5;
pub const EIKONAL_TOLERANCE: f64 = 1e-8;
pub const EIKONAL_MAX_ITERATIONS: usize = 200;
const ZERO_GRADIENT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EikonalOptions {
    /// `ε_stab` as a multiple of the mean edge length.
    pub stabilization_factor: f64,
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EikonalOptions {
    fn default() -> Self {
        EikonalOptions {
            stabilization_factor: 2.0,
            damping: EIKONAL_DAMPING,
            tolerance: EIKONAL_TOLERANCE,
            max_iterations: EIKONAL_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EikonalSolution {
    pub phi: NodalScalarField,
    pub epsilon: f64,
    pub iterations: usize,
    /// Relative max-norm change of the last iteration.
    pub last_update: f64,
}

/// Unit extended normals; `flagged` marks nodes whose averaged gradient
/// vanished (their normal is left at zero).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField {
    pub normals: NodalVectorField,
    pub flagged: Vec<bool>,
}

/// Eikonal solve with `Φ = 0` on the crack polyline.
pub fn solve_eikonal(mesh: &TriMesh) -> Result<EikonalSolution, ShapeError> {
    solve_eikonal_with(mesh, mesh.crack_polyline(), &EikonalOptions::default())
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + s * d)).norm()
}

/// Eikonal solve with `Φ = 0` on the nodes of `zero_set`, read as a polyline
/// for the initial distance guess.
pub fn solve_eikonal_with(
    mesh: &TriMesh,
    zero_set: &[usize],
    opts: &EikonalOptions,
) -> Result<EikonalSolution, ShapeError> {
    solve_eikonal_from(mesh, zero_set, None, opts)
}

/// As [`solve_eikonal_with`], starting the Picard iteration from `initial`
/// (typically the solution on the previous, slightly deformed mesh) instead of
/// the polyline distance.
pub fn solve_eikonal_from(
    mesh: &TriMesh,
    zero_set: &[usize],
    initial: Option<&[f64]>,
    opts: &EikonalOptions,
) -> Result<EikonalSolution, ShapeError> {
    let n = mesh.node_count();
    let nodes = mesh.nodes();
    let epsilon = opts.stabilization_factor * mesh.mean_edge_length();
    let mut fixed = vec![false; n];
    for &i in zero_set {
        fixed[i] = true;
    }
    if zero_set.is_empty() {
        return Err(ShapeError::InvalidParameters("eikonal zero set is empty".into()));
    }
    if let Some(init) = initial {
        if init.len() != n {
            return Err(ShapeError::InvalidParameters(format!(
                "initial guess has {} values for {n} nodes",
                init.len()
            )));
        }
    }

    // Euclidean distance to the zero polyline as the default starting iterate
    let mut phi: Vec<f64> = if let Some(init) = initial {
        init.iter().zip(&fixed).map(|(&v, &f)| if f { 0.0 } else { v }).collect()
    } else {
        nodes
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if fixed[i] {
                return 0.0;
            }
            if zero_set.len() == 1 {
                return (p - nodes[zero_set[0]]).norm();
            }
            zero_set
                .windows(2)
                .map(|w| point_segment_distance(p, nodes[w[0]], nodes[w[1]]))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
    };

    let elements: Vec<([Point; 3], f64)> = (0..mesh.triangle_count()).map(|t| shape_gradients(&mesh.triangle_points(t))).collect();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for tri in mesh.triangles() {
        for &a in tri {
            rows[a].extend_from_slice(tri);
        }
    }
    let mut matrix = CsrMatrix::from_pattern(rows);
    let mut load = vec![0.0; n];
    for (tri, (_, area)) in mesh.triangles().iter().zip(&elements) {
        for &a in tri {
            load[a] += area / 3.0;
        }
    }
    let free: Vec<bool> = fixed.iter().map(|f| !f).collect();

    let mut solver: Option<LuSolver> = None;
    let mut last_update = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        matrix.clear();
        for (tri, (g, area)) in mesh.triangles().iter().zip(&elements) {
            let grad: Point = (0..3).map(|a| g[a] * phi[tri[a]]).sum();
            let norm = grad.norm();
            let b = if norm > 1e-14 { grad / norm } else { Point::zeros() };
            for a in 0..3 {
                for c in 0..3 {
                    let v = area * (epsilon * g[a].dot(&g[c]) + b.dot(&g[c]) / 3.0);
                    matrix.add(tri[a], tri[c], v);
                }
            }
        }
        // zero Dirichlet data: the reduced right-hand side needs no lifting
        let (reduced, map) = matrix.restrict(&free);
        if solver.is_none() {
            solver = Some(LuSolver::new(&reduced).map_err(crate::fem::FemError::from)?);
        }
        let rhs: Vec<f64> = map.iter().map(|&i| load[i]).collect();
        let x = solver.as_mut().expect("factorization initialized").solve(&reduced, &rhs).map_err(crate::fem::FemError::from)?;

        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (r, &i) in map.iter().enumerate() {
            let next = phi[i] + opts.damping * (x[r] - phi[i]);
            change = change.max((next - phi[i]).abs());
            scale = scale.max(next.abs());
            phi[i] = next;
        }
        last_update = if scale > 0.0 { change / scale } else { change };
        if last_update <= opts.tolerance {
            break;
        }
    }
    let solution = EikonalSolution { phi: NodalScalarField(phi), epsilon, iterations, last_update };
    if last_update <= opts.tolerance {
        Ok(solution)
    } else {
        Err(ShapeError::NonConvergence { iterations, last_update, best: Box::new(solution) })
    }
}

/// Per-triangle gradient of a P1 scalar field.
pub fn triangle_gradients(mesh: &TriMesh, phi: &[f64]) -> Vec<Point> {
    (0..mesh.triangle_count())
        .map(|t| {
            let (g, _) = shape_gradients(&mesh.triangle_points(t));
            let tri = mesh.triangles()[t];
            (0..3).map(|a| g[a] * phi[tri[a]]).sum()
        })
        .collect()
}

/// `N = −∇Φ / |∇Φ|` from area-weighted nodal averages of the triangle
/// gradients.
pub fn extended_normals(mesh: &TriMesh, phi: &NodalScalarField) -> NormalField {
    let n = mesh.node_count();
    let mut sum = vec![Point::zeros(); n];
    let mut weight = vec![0.0; n];
    for (t, grad) in triangle_gradients(mesh, phi).into_iter().enumerate() {
        let area = mesh.triangle_area(t);
        for &a in &mesh.triangles()[t] {
            sum[a] += area * grad;
            weight[a] += area;
        }
    }
    let mut flagged = vec![false; n];
    let normals: Vec<Point> = (0..n)
        .map(|i| {
            let g = if weight[i] > 0.0 { sum[i] / weight[i] } else { Point::zeros() };
            let norm = g.norm();
            if norm < ZERO_GRADIENT {
                flagged[i] = true;
                Point::zeros()
            } else {
                -g / norm
            }
        })
        .collect();
    NormalField { normals: normals.into(), flagged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_notched_square, generate_unit_square, BoundaryTag};

    fn left_edge_chain(mesh: &TriMesh) -> Vec<usize> {
        let mut left: Vec<usize> = (0..mesh.node_count()).filter(|&i| mesh.nodes()[i].x.abs() < 1e-12).collect();
        left.sort_by(|&a, &b| mesh.nodes()[a].y.partial_cmp(&mesh.nodes()[b].y).unwrap());
        left
    }

    #[test]
    fn left_edge_distance() {
        let mesh = generate_unit_square(0.05).unwrap();
        let zero = left_edge_chain(&mesh);
        let sol = solve_eikonal_with(&mesh, &zero, &EikonalOptions::default()).unwrap();
        let err = mesh.nodes().iter().zip(sol.phi.iter()).map(|(p, f)| (f - p.x).abs()).fold(0.0, f64::max);
        assert!(err <= 5.0 * sol.epsilon, "error {err} vs eps {}", sol.epsilon);
        let normals = extended_normals(&mesh, &sol.phi);
        let outer = mesh.nodes_with_tags(&[BoundaryTag::Left, BoundaryTag::Right, BoundaryTag::Top, BoundaryTag::Bottom]);
        for i in 0..mesh.node_count() {
            if !normals.flagged[i] {
                assert!((normals.normals[i].norm() - 1.0).abs() < 1e-8);
            }
            if !outer[i] {
                assert!((normals.normals[i] - Point::new(-1.0, 0.0)).norm() < 0.1);
            }
        }
    }

    #[test]
    fn crack_nodes_pinned_and_nonnegative() {
        let mesh = generate_notched_square(0.1, 0.008).unwrap();
        let sol = solve_eikonal(&mesh).unwrap();
        for &c in mesh.crack_polyline() {
            assert_eq!(sol.phi[c], 0.0);
        }
        assert!(sol.phi.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn normals_align_with_crack_normals() {
        let mesh = generate_notched_square(0.1, 0.008).unwrap();
        let sol = solve_eikonal(&mesh).unwrap();
        let normals = extended_normals(&mesh, &sol.phi);
        let geo = mesh.curve_geometry().unwrap();
        for (k, &c) in mesh.crack_polyline().iter().enumerate() {
            let cos = normals.normals[c].dot(&geo.normals[k]);
            assert!(cos >= 20f64.to_radians().cos(), "node {k}: cos {cos}");
        }
    }

    #[test]
    fn zero_gradient_flagged() {
        let mesh = generate_unit_square(0.25).unwrap();
        let normals = extended_normals(&mesh, &NodalScalarField(vec![1.0; mesh.node_count()]));
        assert!(normals.flagged.iter().all(|&f| f));
        assert!(normals.normals.iter().all(|v| *v == Point::zeros()));
    }
}
