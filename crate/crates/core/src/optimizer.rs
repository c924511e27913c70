//! Gradient descent on the crack shape at fixed load, and quasi-static load
//! stepping on top of it.

use log::{debug, warn};
use thiserror::Error;

use crate::fem::{boundary_force, bulk_energy, solve_displacement, DirichletBC, FemError, MaterialParams, NodalVectorField};
use crate::mesh::{remesh, MeshError, Point, TriMesh, DEFAULT_H_FAR, DEFAULT_H_TIP};
use crate::shapegrad::{
    assemble_shape_derivative, extended_normals, project_irreversibility, solve_deformation_field, solve_eikonal_from,
    DeformationParams, EikonalOptions, EikonalSolution, NodalScalarField, ShapeError,
};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("invalid descent options: {0}")]
    InvalidOptions(String),
    #[error("invalid load program: {0}")]
    InvalidProgram(String),
}

pub type Result<T> = std::result::Result<T, OptimizerError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub step_size: f64,
    /// Stop once the crack length changes by less than this in one step (mm).
    pub stop_tol: f64,
    pub max_inner_iterations: usize,
    pub quality_threshold: f64,
    /// Sizing used whenever the mesh is regenerated (mm).
    pub h_far: f64,
    pub h_tip: f64,
    pub deformation: DeformationParams,
    pub eikonal: EikonalOptions,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            step_size: 1e-2,
            stop_tol: 1e-8,
            max_inner_iterations: 5000,
            quality_threshold: 0.2,
            h_far: DEFAULT_H_FAR,
            h_tip: DEFAULT_H_TIP,
            deformation: DeformationParams::default(),
            eikonal: EikonalOptions::default(),
        }
    }
}

impl DescentOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OptimizerError::InvalidOptions(m.to_string()));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step size must be positive");
        }
        if !(self.stop_tol > 0.0) {
            return bad("stop tolerance must be positive");
        }
        if !(self.quality_threshold > 0.0 && self.quality_threshold < 1.0) {
            return bad("quality threshold must lie in (0, 1)");
        }
        if self.max_inner_iterations == 0 {
            return bad("iteration budget must be at least 1");
        }
        if !(self.h_tip > 0.0 && self.h_tip <= self.h_far && self.h_far.is_finite()) {
            return bad("need 0 < h_tip <= h_far");
        }
        self.deformation.validate()?;
        Ok(())
    }
}

/// Prescribed top displacement `magnitude * direction`, with the magnitude
/// stepped coarsely up to `coarse_until` and finely after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadProgram {
    pub direction: Point,
    pub coarse_increment: f64,
    pub coarse_until: f64,
    pub fine_increment: f64,
    pub max_displacement: f64,
}

impl LoadProgram {
    pub fn tension() -> Self {
        LoadProgram {
            direction: Point::new(0.0, 1.0),
            coarse_increment: 1e-3,
            coarse_until: 4e-3,
            fine_increment: 1e-5,
            max_displacement: 1e-2,
        }
    }

    pub fn shear() -> Self {
        LoadProgram {
            direction: Point::new(-1.0, 0.0),
            coarse_increment: 1e-4,
            coarse_until: 8e-3,
            fine_increment: 1e-5,
            max_displacement: 2.22e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.coarse_increment > 0.0
            && self.fine_increment > 0.0
            && self.coarse_until >= 0.0
            && self.coarse_until <= self.max_displacement
            && self.max_displacement.is_finite()
            && self.direction.iter().all(|v| v.is_finite())
            && self.direction.norm() > 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimizerError::InvalidProgram(format!("{self:?}")))
        }
    }

    /// Load magnitudes, each computed from its index so that rounding does not
    /// accumulate.
    pub fn levels(&self) -> Vec<f64> {
        // absorbs representation error in e.g. 4e-3 / 1e-3
        let slack = 1e-9;
        let mut out = Vec::new();
        let n_coarse = (self.coarse_until / self.coarse_increment + slack).floor() as usize;
        for i in 1..=n_coarse {
            out.push(i as f64 * self.coarse_increment);
        }
        let base = n_coarse as f64 * self.coarse_increment;
        let n_fine = ((self.max_displacement - base) / self.fine_increment + slack).floor().max(0.0) as usize;
        for j in 1..=n_fine {
            out.push(base + j as f64 * self.fine_increment);
        }
        out
    }
}

/// Observables after the inner descent at one load level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub displacement: f64,
    pub tau: Point,
    pub e_bulk: f64,
    pub e_fracture: f64,
    pub j_reg: f64,
    pub crack_length: f64,
    pub nodes: usize,
    pub triangles: usize,
    pub inner_iterations: usize,
    pub remeshes: usize,
    pub stalled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub j: f64,
    pub e_bulk: f64,
    pub e_fracture: f64,
    pub j_reg: f64,
}

/// `J = E_bulk + ½ G_c L + ν |Ω̃|` for the state `w` on `mesh`.
pub fn evaluate_objective(mesh: &TriMesh, mat: &MaterialParams, w: &NodalVectorField) -> Objective {
    let e_bulk = bulk_energy(mesh, mat, w);
    let e_fracture = 0.5 * mat.g_c * mesh.crack_length();
    let j_reg = mat.nu_reg * mesh.slit_area();
    Objective { j: e_bulk + e_fracture + j_reg, e_bulk, e_fracture, j_reg }
}

#[derive(Debug, Clone)]
pub struct InnerReport {
    pub iterations: usize,
    pub remeshes: usize,
    /// Budget exhausted, or a step inverted elements even after remeshing.
    pub stalled: bool,
    /// Largest `⟨V', N⟩` seen after projection; never positive.
    pub max_constraint: f64,
    pub state: NodalVectorField,
    pub deformation: NodalVectorField,
    pub phi: NodalScalarField,
}

fn eikonal(mesh: &TriMesh, initial: Option<&[f64]>, opts: &EikonalOptions) -> Result<EikonalSolution> {
    match solve_eikonal_from(mesh, mesh.crack_polyline(), initial, opts) {
        Ok(s) => Ok(s),
        Err(ShapeError::NonConvergence { best, iterations, last_update }) => {
            warn!("eikonal stopped after {iterations} iterations at update {last_update:e}");
            Ok(*best)
        }
        Err(e) => Err(e.into()),
    }
}

/// Descends on the crack shape at fixed Dirichlet data until the crack length
/// settles.
pub fn inner_descent(
    mesh: &TriMesh,
    mat: &MaterialParams,
    bc: &DirichletBC,
    opts: &DescentOptions,
) -> Result<(TriMesh, InnerReport)> {
    opts.validate()?;
    mat.validate()?;
    let mut mesh = mesh.clone();
    let mut remeshes = 0;
    let mut stalled = true;
    let mut retried = false;
    let mut max_constraint = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut deformation = NodalVectorField::zeros(mesh.node_count());
    let mut phi = NodalScalarField::default();
    // set when a remesh invalidated the nodal fields above
    let mut stale = true;

    while iterations < opts.max_inner_iterations {
        iterations += 1;
        let w = solve_displacement(&mesh, mat, bc)?;
        let g = assemble_shape_derivative(&mesh, mat, &w)?;
        let v = solve_deformation_field(&mesh, &g, &opts.deformation)?;
        // after a plain deformation step the previous Φ is a close guess
        let warm = if stale { None } else { Some(&phi[..]) };
        let sol = eikonal(&mesh, warm, &opts.eikonal)?;
        let normals = extended_normals(&mesh, &sol.phi);
        let projected = project_irreversibility(&v, &normals.normals);
        for (vi, ni) in projected.iter().zip(normals.normals.iter()) {
            max_constraint = max_constraint.max(vi.dot(ni));
        }
        phi = sol.phi;
        stale = false;

        if g.apply(&projected) >= 0.0 {
            // projection removed every descent direction
            deformation = projected;
            stalled = false;
            break;
        }
        let length = mesh.crack_length();
        let (next, applied) = match deform_with_contact(&mesh, &projected, opts.step_size) {
            Ok(Some(step)) => step,
            Ok(None) => {
                warn!("crack polyline would self-intersect; giving up at this load");
                deformation = projected;
                break;
            }
            Err(MeshError::ElementInversion { element, area }) => {
                if retried {
                    warn!("element {element} inverted (area {area:e}) after remeshing; giving up at this load");
                    deformation = projected;
                    break;
                }
                debug!("element {element} inverted; remeshing and retrying");
                mesh = remesh(&mesh, opts.h_far, opts.h_tip)?;
                remeshes += 1;
                stale = true;
                retried = true;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        retried = false;
        deformation = applied;
        let change = next.crack_length() - length;
        if change < 0.0 {
            // tangential sliding of crack nodes would heal the crack; the
            // current shape is the irreversible minimizer at this load
            stalled = false;
            break;
        }
        mesh = next;

        if mesh.mesh_quality() < opts.quality_threshold {
            mesh = remesh(&mesh, opts.h_far, opts.h_tip)?;
            remeshes += 1;
            stale = true;
        }
        if change.abs() < opts.stop_tol {
            stalled = false;
            break;
        }
    }
    if stale {
        // the last event was a remesh; fields refer to the old node set
        deformation = NodalVectorField::zeros(mesh.node_count());
        phi = eikonal(&mesh, None, &opts.eikonal)?.phi;
    }
    let state = solve_displacement(&mesh, mat, bc)?;
    Ok((mesh, InnerReport { iterations, remeshes, stalled, max_constraint, state, deformation, phi }))
}

/// Rounds of contact freezing tried when a step would make the crack cross itself.
const MAX_CONTACT_ROUNDS: usize = 8;

/// Deforms by `step`; crack faces may not pass through each other, so nodes
/// of crossing segments are held fixed and the step retried. Returns the mesh
/// and the field actually applied, or `None` if crossings persist.
fn deform_with_contact(
    mesh: &TriMesh,
    field: &NodalVectorField,
    step: f64,
) -> std::result::Result<Option<(TriMesh, NodalVectorField)>, MeshError> {
    let mut field = field.clone();
    for _ in 0..=MAX_CONTACT_ROUNDS {
        let next = mesh.deform(&field, step)?;
        let crossing = next.crack_crossings();
        if crossing.is_empty() {
            return Ok(Some((next, field)));
        }
        for i in crossing {
            field[i] = Point::zeros();
        }
    }
    Ok(None)
}

/// True once a crack node comes within `tol` of the left, top or bottom edge.
pub fn crack_reached_boundary(mesh: &TriMesh, tol: f64) -> bool {
    mesh.crack_polyline().iter().any(|&i| {
        let p = mesh.nodes()[i];
        p.x <= tol || p.y <= tol || p.y >= 1.0 - tol
    })
}

/// Why a load program ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxDisplacement,
    CrackReachedBoundary,
}

/// Everything the driver needs after each load step.
pub struct StepOutcome<'a> {
    pub index: usize,
    pub record: &'a StepRecord,
    pub mesh: &'a TriMesh,
    pub report: &'a InnerReport,
    pub last: bool,
}

pub struct RunResult {
    pub records: Vec<StepRecord>,
    pub mesh: TriMesh,
    pub termination: Termination,
}

/// Runs the quasi-static load program, calling `observer` after every step.
pub fn run_load_program(
    mesh: &TriMesh,
    mat: &MaterialParams,
    program: &LoadProgram,
    opts: &DescentOptions,
    mut observer: impl FnMut(&StepOutcome<'_>) -> std::io::Result<()>,
) -> Result<RunResult> {
    program.validate()?;
    opts.validate()?;
    let direction = program.direction;
    let levels = program.levels();
    let mut current = mesh.clone();
    let mut records = Vec::with_capacity(levels.len());
    let mut termination = Termination::MaxDisplacement;
    for (index, &magnitude) in levels.iter().enumerate() {
        let bc = DirichletBC::top(direction * magnitude);
        let (next, report) = inner_descent(&current, mat, &bc, opts)?;
        current = next;
        let objective = evaluate_objective(&current, mat, &report.state);
        let record = StepRecord {
            displacement: magnitude,
            tau: boundary_force(&current, mat, &report.state),
            e_bulk: objective.e_bulk,
            e_fracture: objective.e_fracture,
            j_reg: objective.j_reg,
            crack_length: current.crack_length(),
            nodes: current.node_count(),
            triangles: current.triangle_count(),
            inner_iterations: report.iterations,
            remeshes: report.remeshes,
            stalled: report.stalled,
        };
        log::info!(
            "load {magnitude:.6e}: L = {:.6}, iters = {}, remeshes = {}{}",
            record.crack_length,
            record.inner_iterations,
            record.remeshes,
            if record.stalled { " (stalled)" } else { "" }
        );
        let reached = crack_reached_boundary(&current, opts.h_tip);
        if reached {
            termination = Termination::CrackReachedBoundary;
        }
        let last = reached || index + 1 == levels.len();
        observer(&StepOutcome { index: index + 1, record: &record, mesh: &current, report: &report, last })
            .map_err(|e| OptimizerError::InvalidOptions(format!("observer failed: {e}")))?;
        records.push(record);
        if reached {
            break;
        }
    }
    Ok(RunResult { records, mesh: current, termination })
}

/// Smallest displacement at which the crack grew by at least `threshold`
/// since the previous record.
pub fn detect_onset(records: &[StepRecord], threshold: f64) -> Option<f64> {
    records.windows(2).find(|w| w[1].crack_length - w[0].crack_length >= threshold).map(|w| w[1].displacement)
}

pub const DEFAULT_ONSET_THRESHOLD: f64 = 0.01;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_notched_square;

    fn record(d: f64, l: f64) -> StepRecord {
        StepRecord {
            displacement: d,
            tau: Point::zeros(),
            e_bulk: 0.0,
            e_fracture: 0.0,
            j_reg: 0.0,
            crack_length: l,
            nodes: 0,
            triangles: 0,
            inner_iterations: 0,
            remeshes: 0,
            stalled: false,
        }
    }

    #[test]
    fn tension_levels() {
        let levels = LoadProgram::tension().levels();
        assert_eq!(&levels[..4], &[1e-3, 2e-3, 3e-3, 4e-3]);
        assert!((levels[4] - 4.01e-3).abs() < 1e-15);
        assert!(levels.windows(2).all(|w| w[1] > w[0]));
        assert!((levels.last().unwrap() - 1e-2).abs() < 1e-12);
    }

    #[test]
    fn shear_levels() {
        let levels = LoadProgram::shear().levels();
        assert_eq!(levels.len(), 80 + 1420);
        assert!((levels[79] - 8e-3).abs() < 1e-15);
        assert!((levels[80] - 8.01e-3).abs() < 1e-15);
        assert!((levels.last().unwrap() - 2.22e-2).abs() < 1e-12);
    }

    #[test]
    fn onset_detection() {
        let recs = vec![record(1.0, 1.0), record(2.0, 1.001), record(3.0, 1.051), record(4.0, 1.2)];
        assert_eq!(detect_onset(&recs, 0.01), Some(3.0));
        assert_eq!(detect_onset(&recs[..2], 0.01), None);
    }

    #[test]
    fn objective_of_initial_geometry() {
        let mesh = generate_notched_square(DEFAULT_H_FAR, DEFAULT_H_TIP).unwrap();
        let mat = MaterialParams::default();
        let o = evaluate_objective(&mesh, &mat, &NodalVectorField::zeros(mesh.node_count()));
        assert_eq!(o.e_bulk, 0.0);
        assert!((o.e_fracture - 0.5 * 2.7 * 1.0314159).abs() < 2e-3);
        assert!((o.j_reg - (0.5 * 0.02 + std::f64::consts::PI * 1e-4 / 2.0)).abs() < 1e-4);
        let doubled = evaluate_objective(&mesh, &MaterialParams { g_c: 5.4, ..mat }, &NodalVectorField::zeros(mesh.node_count()));
        assert_eq!(doubled.e_fracture, 2.0 * o.e_fracture);
    }

    #[test]
    fn invalid_options_rejected() {
        let o = DescentOptions { step_size: 0.0, ..Default::default() };
        assert!(o.validate().is_err());
        let o = DescentOptions { quality_threshold: 1.0, ..Default::default() };
        assert!(o.validate().is_err());
        let p = LoadProgram { coarse_until: 1.0, max_displacement: 0.5, ..LoadProgram::tension() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_load_keeps_crack() {
        let mesh = generate_notched_square(0.1, 0.008).unwrap();
        let (out, report) =
            inner_descent(&mesh, &MaterialParams::default(), &DirichletBC::top(Point::zeros()), &DescentOptions::default())
                .unwrap();
        assert_eq!(report.iterations, 1);
        assert!((out.crack_length() - mesh.crack_length()).abs() <= 1e-12);
        assert!(report.max_constraint <= 0.0);
    }
}
