//! Shape derivative of the fracture objective, the deformation equation that
//! turns it into a descent field, and the irreversibility projection.
//!
//! The objective is `J = E_bulk(w(Ω)) + ½ G_c |u| + ν |Ω̃|` where `u` is the
//! crack polyline and `Ω̃` the slit it encloses together with the closing
//! segment `P2 → P1`. The covector `g` returned by
//! [`assemble_shape_derivative`] is the exact derivative of the discrete
//! objective with respect to node positions.

mod eikonal;

use std::ops::Deref;

use nalgebra::Matrix2;
use thiserror::Error;

use crate::fem::{
    assemble_stiffness, element_gradient, shape_gradients, solve_constrained, strain, stress, FemError,
    MaterialParams, NodalVectorField,
};
use crate::mesh::{MeshError, Point, TriMesh};

pub use eikonal::{
    extended_normals, solve_eikonal, solve_eikonal_from, solve_eikonal_with, triangle_gradients, EikonalOptions, EikonalSolution, NormalField,
    EIKONAL_DAMPING, EIKONAL_MAX_ITERATIONS, EIKONAL_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("eikonal iteration did not converge in {iterations} iterations (last update {last_update:e})")]
    NonConvergence { iterations: usize, last_update: f64, best: Box<EikonalSolution> },
    #[error("invalid deformation parameters: {0}")]
    InvalidParameters(String),
}

/// Per-node covector `g` with `g · W = dJ[W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDerivative {
    pub covector: Vec<Point>,
}

impl ShapeDerivative {
    /// `dJ[W]` for a nodal direction field.
    pub fn apply(&self, w: &NodalVectorField) -> f64 {
        self.covector.iter().zip(w.iter()).map(|(g, v)| g.dot(v)).sum()
    }
}

/// Per-node scalar, e.g. the distance-like field `Φ` (mm).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalScalarField(pub Vec<f64>);

impl Deref for NodalScalarField {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Volume part of the shape derivative only.
pub fn bulk_shape_derivative(mesh: &TriMesh, mat: &MaterialParams, w: &NodalVectorField) -> Vec<Point> {
    let mut g = vec![Point::zeros(); mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = shape_gradients(&mesh.triangle_points(t));
        let gw = element_gradient(&grads, tri.map(|v| w[v]));
        let eps = strain(&gw);
        let sigma = stress(&eps, mat.lambda, mat.mu);
        let psi = 0.5 * sigma.component_mul(&eps).sum();
        // Eshelby-type tensor: psi I - grad(w)^T sigma
        let eshelby = Matrix2::identity() * psi - gw.transpose() * sigma;
        for a in 0..3 {
            g[tri[a]] += area * (eshelby * grads[a]);
        }
    }
    g
}

/// Crack-curve part: `½ G_c ∫ κ Wᵀn ds − ν ∫ Wᵀn ds`.
pub fn curve_shape_derivative(mesh: &TriMesh, mat: &MaterialParams) -> Result<Vec<Point>, MeshError> {
    let mut g = vec![Point::zeros(); mesh.node_count()];
    let crack = mesh.crack_polyline();
    if crack.is_empty() {
        return Ok(g);
    }
    let geo = mesh.curve_geometry()?;
    for (k, &node) in crack.iter().enumerate() {
        g[node] += 0.5 * mat.g_c * geo.curvature[k] * geo.dual_length(k) * geo.normals[k];
    }
    for (s, pair) in crack.windows(2).enumerate() {
        let v = -mat.nu_reg * 0.5 * geo.segment_lengths[s] * geo.segment_normals[s];
        g[pair[0]] += v;
        g[pair[1]] += v;
    }
    Ok(g)
}

/// Shape derivative of `J` at the state `w`.
pub fn assemble_shape_derivative(
    mesh: &TriMesh,
    mat: &MaterialParams,
    w: &NodalVectorField,
) -> Result<ShapeDerivative, MeshError> {
    let mut covector = bulk_shape_derivative(mesh, mat, w);
    for (g, c) in covector.iter_mut().zip(curve_shape_derivative(mesh, mat)?) {
        *g += c;
    }
    Ok(ShapeDerivative { covector })
}

/// Pseudo-elastic parameters of the deformation equation.
///
/// The shear modulus is graded linearly from `mu_tip` at the crack tip to
/// `mu_far` at distance `grading_distance` and beyond; stiffer material near
/// the tip keeps the elements there from collapsing. The 10:1 grading with
/// `λ = 0` is used at an absolute scale (10 → 1) for which one descent step
/// of size 1e-2 moves the tip by a fraction of the tip element size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationParams {
    pub mu_tip: f64,
    pub mu_far: f64,
    pub grading_distance: f64,
    pub lambda: f64,
}

impl Default for DeformationParams {
    fn default() -> Self {
        DeformationParams { mu_tip: 10.0, mu_far: 1.0, grading_distance: 0.1, lambda: 0.0 }
    }
}

impl DeformationParams {
    pub fn validate(&self) -> Result<(), ShapeError> {
        let ok = self.mu_tip > 0.0
            && self.mu_far > 0.0
            && self.grading_distance > 0.0
            && self.lambda >= 0.0
            && [self.mu_tip, self.mu_far, self.grading_distance, self.lambda].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(ShapeError::InvalidParameters(format!("{self:?}")))
        }
    }

    pub fn mu_at(&self, distance_to_tip: f64) -> f64 {
        if distance_to_tip >= self.grading_distance {
            return self.mu_far;
        }
        let s = distance_to_tip.max(0.0) / self.grading_distance;
        self.mu_tip + (self.mu_far - self.mu_tip) * s
    }
}

/// Solves `a(V, W) = −g · W` for all `W` vanishing on the outer boundary.
pub fn solve_deformation_field(
    mesh: &TriMesh,
    g: &ShapeDerivative,
    params: &DeformationParams,
) -> Result<NodalVectorField, ShapeError> {
    params.validate()?;
    let tip = mesh.tip_point().unwrap_or_else(|| Point::new(0.5, 0.5));
    let matrix = assemble_stiffness(mesh, |t| {
        let [a, b, c] = mesh.triangle_points(t);
        let centroid = (a + b + c) / 3.0;
        (params.lambda, params.mu_at((centroid - tip).norm()))
    });
    let rhs: Vec<f64> = g.covector.iter().flat_map(|v| [-v.x, -v.y]).collect();
    let constrained: Vec<bool> = mesh.outer_boundary_nodes().into_iter().flat_map(|c| [c, c]).collect();
    let prescribed = vec![0.0; rhs.len()];
    let x = solve_constrained(&matrix, &rhs, &constrained, &prescribed).map_err(|e| match e {
        FemError::SingularSystem(_) => {
            FemError::SingularSystem("outer boundary has no nodes to anchor the deformation".into())
        }
        other => other,
    })?;
    Ok(NodalVectorField::from_dofs(&x))
}

/// Zeroes `V` at every node where `⟨V, N⟩ > 0`.
pub fn project_irreversibility(v: &NodalVectorField, n: &NodalVectorField) -> NodalVectorField {
    v.iter().zip(n.iter()).map(|(vi, ni)| if vi.dot(ni) > 0.0 { Point::zeros() } else { *vi }).collect::<Vec<_>>().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{bulk_energy, solve_displacement, DirichletBC};
    use crate::mesh::generate_notched_square;

    fn coarse() -> TriMesh {
        generate_notched_square(0.1, 0.008).unwrap()
    }

    #[test]
    fn zero_direction_zero_derivative() {
        let mesh = coarse();
        let mat = MaterialParams::default();
        let w = solve_displacement(&mesh, &mat, &DirichletBC::top(Point::new(0.0, 1e-3))).unwrap();
        let g = assemble_shape_derivative(&mesh, &mat, &w).unwrap();
        assert_eq!(g.apply(&NodalVectorField::zeros(mesh.node_count())), 0.0);
    }

    #[test]
    fn translation_of_whole_mesh_has_no_bulk_derivative() {
        // rigid motion of all nodes leaves the energy unchanged
        let mesh = coarse();
        let mat = MaterialParams::default();
        let w = solve_displacement(&mesh, &mat, &DirichletBC::top(Point::new(0.0, 1e-3))).unwrap();
        let g = bulk_shape_derivative(&mesh, &mat, &w);
        let total: Point = g.iter().sum();
        let scale: f64 = g.iter().map(|v| v.norm()).sum();
        assert!(total.norm() <= 1e-10 * scale);
    }

    #[test]
    fn uniform_dilation_leaves_bulk_energy_stationary() {
        // in 2D, x -> (1+s) x scales gradients by 1/(1+s) and areas by (1+s)^2
        let mesh = coarse();
        let mat = MaterialParams::default();
        let w = solve_displacement(&mesh, &mat, &DirichletBC::top(Point::new(0.0, 1e-3))).unwrap();
        let g = bulk_shape_derivative(&mesh, &mat, &w);
        let dil: NodalVectorField = mesh.nodes().to_vec().into();
        let d: f64 = g.iter().zip(dil.iter()).map(|(a, b)| a.dot(b)).sum();
        assert!(d.abs() <= 1e-9 * bulk_energy(&mesh, &mat, &w));
    }

    #[test]
    fn curve_term_on_semicircle() {
        // polyline on a semicircle of radius r, domain outside: W = n gives
        // ½ G_c ∫ κ ds = ½ G_c π
        let r = 0.2;
        let m = 400;
        let pts: Vec<Point> = (0..=m)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / m as f64;
                Point::new(r * a.cos(), r * a.sin())
            })
            .collect();
        let geo = crate::mesh::curve_geometry_of(&pts).unwrap();
        let g_c = 2.7;
        let direct: f64 = (0..pts.len()).map(|k| 0.5 * g_c * geo.curvature[k] * geo.dual_length(k)).sum();
        let exact = 0.5 * g_c * std::f64::consts::PI;
        // counterclockwise arc: the left normal points to the centre
        assert!((direct.abs() - exact).abs() <= 0.02 * exact);
    }

    #[test]
    fn deformation_field_vanishes_on_outer_boundary_and_descends() {
        let mesh = coarse();
        let mat = MaterialParams::default();
        let w = solve_displacement(&mesh, &mat, &DirichletBC::top(Point::new(0.0, 3e-3))).unwrap();
        let g = assemble_shape_derivative(&mesh, &mat, &w).unwrap();
        let v = solve_deformation_field(&mesh, &g, &DeformationParams::default()).unwrap();
        let outer = mesh.outer_boundary_nodes();
        for (i, o) in outer.iter().enumerate() {
            if *o {
                assert_eq!(v[i], Point::zeros());
            }
        }
        assert!(g.apply(&v) < 0.0);
    }

    #[test]
    fn zero_covector_gives_zero_field() {
        let mesh = coarse();
        let g = ShapeDerivative { covector: vec![Point::zeros(); mesh.node_count()] };
        let v = solve_deformation_field(&mesh, &g, &DeformationParams::default()).unwrap();
        assert!(v.max_norm() <= 1e-12);
    }

    #[test]
    fn projection_cases() {
        let n: NodalVectorField = vec![Point::new(1.0, 0.0), Point::new(0.0, 1.0), Point::zeros()].into();
        let ok: NodalVectorField = vec![Point::new(-1.0, 2.0), Point::new(3.0, -0.5), Point::new(1.0, 1.0)].into();
        assert_eq!(project_irreversibility(&ok, &n), ok);
        assert!(project_irreversibility(&n, &n).iter().all(|v| *v == Point::zeros()));
        let mixed: NodalVectorField = vec![Point::new(0.5, 0.0), Point::new(1.0, -1.0), Point::new(2.0, 2.0)].into();
        let p = project_irreversibility(&mixed, &n);
        assert_eq!(p[0], Point::zeros());
        assert_eq!(p[1], mixed[1]);
        assert_eq!(p[2], mixed[2]);
    }

    #[test]
    fn mu_grading() {
        let p = DeformationParams { mu_tip: 1.0, mu_far: 0.1, ..DeformationParams::default() };
        assert_eq!(p.mu_at(0.0), 1.0);
        assert_eq!(p.mu_at(0.5), 0.1);
        assert!((p.mu_at(0.05) - 0.55).abs() < 1e-15);
        assert!(DeformationParams { mu_far: 0.0, ..p }.validate().is_err());
    }
}
