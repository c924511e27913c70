//! P1 linear elasticity on triangle meshes.
//!
//! Stress follows `sigma = 2 mu eps + lambda tr(eps) I` with the Lamé
//! constants used as given (plane strain). The body force is zero. Dirichlet
//! data is prescribed on the `Top` and `Bottom` boundary parts; all other
//! boundary parts, the crack faces included, are traction free.

use std::ops::{Deref, DerefMut};

use nalgebra::Matrix2;
use thiserror::Error;

use crate::linalg::{solve_spd, CsrMatrix, SolveError};
use crate::mesh::{BoundaryTag, Point, TriMesh};

#[derive(Debug, Error)]
pub enum FemError {
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("linear solver did not converge: {0}")]
    SolverDivergence(String),
    #[error("invalid material parameters: {0}")]
    InvalidMaterial(String),
}

impl From<SolveError> for FemError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Singular(m) => FemError::SingularSystem(m),
            d @ SolveError::Divergence { .. } => FemError::SolverDivergence(d.to_string()),
        }
    }
}

/// Material constants and objective weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    /// First Lamé constant (N/mm²).
    pub lambda: f64,
    /// Shear modulus (N/mm²).
    pub mu: f64,
    /// Fracture toughness (N/mm).
    pub g_c: f64,
    /// Weight of the slit-area regularization (N/mm²).
    pub nu_reg: f64,
}

pub const DEFAULT_LAMBDA: f64 = 121.15e3;
pub const DEFAULT_MU: f64 = 80.77e3;
pub const DEFAULT_G_C: f64 = 2.7;

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { lambda: DEFAULT_LAMBDA, mu: DEFAULT_MU, g_c: DEFAULT_G_C, nu_reg: 1.0 }
    }
}

impl MaterialParams {
    pub fn new(lambda: f64, mu: f64, g_c: f64, nu_reg: f64) -> Result<Self, FemError> {
        let m = MaterialParams { lambda, mu, g_c, nu_reg };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.mu > 0.0) {
            return Err(FemError::InvalidMaterial(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.lambda + self.mu > 0.0) {
            return Err(FemError::InvalidMaterial("lambda + mu must be positive".into()));
        }
        if !(self.g_c >= 0.0 && self.nu_reg >= 0.0) {
            return Err(FemError::InvalidMaterial("G_c and nu must be non-negative".into()));
        }
        if ![self.lambda, self.mu, self.g_c, self.nu_reg].iter().all(|v| v.is_finite()) {
            return Err(FemError::InvalidMaterial("parameters must be finite".into()));
        }
        Ok(())
    }
}

/// One 2-vector per mesh node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodalVectorField(Vec<Point>);

impl NodalVectorField {
    pub fn zeros(n: usize) -> Self {
        NodalVectorField(vec![Point::zeros(); n])
    }

    pub fn into_inner(self) -> Vec<Point> {
        self.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        NodalVectorField(self.0.iter().map(|v| v * factor).collect())
    }

    /// Sum of nodal dot products.
    pub fn dot(&self, other: &NodalVectorField) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn max_norm(&self) -> f64 {
        self.0.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Interleaved `[x0, y0, x1, y1, ...]` degrees of freedom.
    pub fn to_dofs(&self) -> Vec<f64> {
        self.0.iter().flat_map(|v| [v.x, v.y]).collect()
    }

    pub fn from_dofs(dofs: &[f64]) -> Self {
        NodalVectorField(dofs.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect())
    }
}

impl From<Vec<Point>> for NodalVectorField {
    fn from(v: Vec<Point>) -> Self {
        NodalVectorField(v)
    }
}

impl Deref for NodalVectorField {
    type Target = [Point];

    fn deref(&self) -> &[Point] {
        &self.0
    }
}

impl DerefMut for NodalVectorField {
    fn deref_mut(&mut self) -> &mut [Point] {
        &mut self.0
    }
}

/// Prescribed displacement on `Top`; `Bottom` is clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirichletBC {
    pub top: Point,
    pub bottom: Point,
}

impl DirichletBC {
    pub fn top(value: Point) -> Self {
        DirichletBC { top: value, bottom: Point::zeros() }
    }
}

/// Unconstrained stiffness matrix, load vector and the constrained DOFs.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constrained: Vec<bool>,
}

/// Gradients of the three P1 basis functions and the (signed) area.
pub fn shape_gradients(p: &[Point; 3]) -> ([Point; 3], f64) {
    let area = 0.5 * ((p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y));
    let inv = 1.0 / (2.0 * area);
    let mut g = [Point::zeros(); 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = Point::new(p[j].y - p[k].y, p[k].x - p[j].x) * inv;
    }
    (g, area)
}

/// Displacement gradient `(grad w)_ij = d w_i / d x_j` on one triangle.
pub fn element_gradient(grads: &[Point; 3], values: [Point; 3]) -> Matrix2<f64> {
    (0..3).map(|a| values[a] * grads[a].transpose()).sum()
}

pub fn strain(grad: &Matrix2<f64>) -> Matrix2<f64> {
    0.5 * (grad + grad.transpose())
}

pub fn stress(eps: &Matrix2<f64>, lambda: f64, mu: f64) -> Matrix2<f64> {
    2.0 * mu * eps + Matrix2::identity() * (lambda * eps.trace())
}

/// Element stiffness of `int 2 mu eps(u):eps(v) + lambda div u div v`, DOFs
/// ordered `(node a, component i) -> 2a + i`.
pub fn element_stiffness(p: &[Point; 3], lambda: f64, mu: f64) -> [[f64; 6]; 6] {
    let (g, area) = shape_gradients(p);
    let mut k = [[0.0; 6]; 6];
    for a in 0..3 {
        for b in 0..3 {
            let gg = g[a].dot(&g[b]);
            for i in 0..2 {
                for j in 0..2 {
                    let delta = if i == j { gg } else { 0.0 };
                    k[2 * a + i][2 * b + j] = area * (mu * (delta + g[a][j] * g[b][i]) + lambda * g[a][i] * g[b][j]);
                }
            }
        }
    }
    // mirror the upper triangle so the assembled matrix is bitwise symmetric
    for r in 0..6 {
        for c in 0..r {
            k[r][c] = k[c][r];
        }
    }
    k
}

/// Empty two-DOF-per-node matrix with the mesh connectivity pattern.
pub(crate) fn vector_pattern(mesh: &TriMesh) -> CsrMatrix {
    let n = mesh.node_count();
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); 2 * n];
    for tri in mesh.triangles() {
        for &a in tri {
            for &b in tri {
                for i in 0..2 {
                    rows[2 * a + i].extend_from_slice(&[2 * b, 2 * b + 1]);
                }
            }
        }
    }
    CsrMatrix::from_pattern(rows)
}

/// Assembles the elasticity form with per-triangle Lamé constants.
pub(crate) fn assemble_stiffness(mesh: &TriMesh, lame: impl Fn(usize) -> (f64, f64)) -> CsrMatrix {
    let mut k = vector_pattern(mesh);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (lambda, mu) = lame(t);
        let ke = element_stiffness(&mesh.triangle_points(t), lambda, mu);
        for a in 0..3 {
            for i in 0..2 {
                for b in 0..3 {
                    for j in 0..2 {
                        k.add(2 * tri[a] + i, 2 * tri[b] + j, ke[2 * a + i][2 * b + j]);
                    }
                }
            }
        }
    }
    k
}

/// Stiffness matrix, zero load and the Dirichlet DOFs (`Top` and `Bottom`).
pub fn assemble_elasticity(mesh: &TriMesh, mat: &MaterialParams) -> LinearSystem {
    let matrix = assemble_stiffness(mesh, |_| (mat.lambda, mat.mu));
    let dirichlet = mesh.nodes_with_tags(&[BoundaryTag::Top, BoundaryTag::Bottom]);
    let constrained = dirichlet.iter().flat_map(|&d| [d, d]).collect();
    LinearSystem { matrix, rhs: vec![0.0; 2 * mesh.node_count()], constrained }
}

/// Solves `K x = f` with `x` prescribed on the flagged DOFs by eliminating
/// those rows and columns.
pub(crate) fn solve_constrained(
    matrix: &CsrMatrix,
    rhs: &[f64],
    constrained: &[bool],
    prescribed: &[f64],
) -> Result<Vec<f64>, FemError> {
    if !constrained.iter().any(|&c| c) {
        return Err(FemError::SingularSystem("no constrained degrees of freedom".into()));
    }
    let free: Vec<bool> = constrained.iter().map(|c| !c).collect();
    let (reduced, map) = matrix.restrict(&free);
    let mut lifted = vec![0.0; rhs.len()];
    for (i, &c) in constrained.iter().enumerate() {
        if c {
            lifted[i] = prescribed[i];
        }
    }
    let k_lift = matrix.mul_vec(&lifted);
    let b: Vec<f64> = map.iter().map(|&i| rhs[i] - k_lift[i]).collect();
    let x_free = solve_spd(&reduced, &b)?;
    let mut x = lifted;
    for (r, &i) in map.iter().enumerate() {
        x[i] = x_free[r];
    }
    Ok(x)
}

/// P1 displacement for the given Dirichlet data.
pub fn solve_displacement(mesh: &TriMesh, mat: &MaterialParams, bc: &DirichletBC) -> Result<NodalVectorField, FemError> {
    let system = assemble_elasticity(mesh, mat);
    let top = mesh.nodes_with_tags(&[BoundaryTag::Top]);
    let bottom = mesh.nodes_with_tags(&[BoundaryTag::Bottom]);
    let mut prescribed = vec![0.0; 2 * mesh.node_count()];
    for i in 0..mesh.node_count() {
        let value = if top[i] {
            bc.top
        } else if bottom[i] {
            bc.bottom
        } else {
            continue;
        };
        prescribed[2 * i] = value.x;
        prescribed[2 * i + 1] = value.y;
    }
    let x = solve_constrained(&system.matrix, &system.rhs, &system.constrained, &prescribed)?;
    Ok(NodalVectorField::from_dofs(&x))
}

/// Elastic energy `1/2 int sigma(w):eps(w)` (N mm per unit thickness).
pub fn bulk_energy(mesh: &TriMesh, mat: &MaterialParams, w: &NodalVectorField) -> f64 {
    (0..mesh.triangle_count())
        .map(|t| {
            let p = mesh.triangle_points(t);
            let (g, area) = shape_gradients(&p);
            let tri = mesh.triangles()[t];
            let eps = strain(&element_gradient(&g, tri.map(|v| w[v])));
            0.5 * stress(&eps, mat.lambda, mat.mu).component_mul(&eps).sum() * area
        })
        .sum()
}

/// Nodal internal forces `K w`, assembled element by element.
pub fn internal_forces(mesh: &TriMesh, mat: &MaterialParams, w: &NodalVectorField) -> Vec<Point> {
    let mut f = vec![Point::zeros(); mesh.node_count()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = shape_gradients(&mesh.triangle_points(t));
        let eps = strain(&element_gradient(&g, tri.map(|v| w[v])));
        let sigma = stress(&eps, mat.lambda, mat.mu);
        for a in 0..3 {
            f[tri[a]] += area * (sigma * g[a]);
        }
    }
    f
}

/// Reaction on the nodes of one boundary part.
pub fn reaction_force(mesh: &TriMesh, mat: &MaterialParams, w: &NodalVectorField, tag: BoundaryTag) -> Point {
    let f = internal_forces(mesh, mat, w);
    let on = mesh.nodes_with_tags(&[tag]);
    f.iter().zip(on).filter(|(_, o)| *o).map(|(v, _)| *v).sum()
}

/// Force on the top boundary, recovered from the stiffness residual.
pub fn boundary_force(mesh: &TriMesh, mat: &MaterialParams, w: &NodalVectorField) -> Point {
    reaction_force(mesh, mat, w, BoundaryTag::Top)
}
