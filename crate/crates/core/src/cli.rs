//! Command-line driver: configuration, benchmark presets and output files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use thiserror::Error;

use crate::fem::{MaterialParams, NodalVectorField};
use crate::mesh::{generate_notched_square, read_msh, Point, TriMesh, DEFAULT_H_FAR, DEFAULT_H_TIP};
use crate::optimizer::{
    detect_onset, run_load_program, DescentOptions, LoadProgram, OptimizerError, StepRecord, Termination,
    DEFAULT_ONSET_THRESHOLD,
};
use crate::shapegrad::NodalScalarField;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("run failed: {0}")]
    Run(#[from] OptimizerError),
}

impl CliError {
    /// 2 for usage and validation problems, 1 for everything that went wrong
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) => 2,
            CliError::Io(_) | CliError::Run(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Benchmark {
    Tension,
    Shear,
    Custom,
}

impl FromStr for Benchmark {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tension" => Ok(Benchmark::Tension),
            "shear" => Ok(Benchmark::Shear),
            "custom" => Ok(Benchmark::Custom),
            other => Err(CliError::Usage(format!("unknown benchmark '{other}' (expected tension, shear or custom)"))),
        }
    }
}

impl Benchmark {
    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Tension => "tension",
            Benchmark::Shear => "shear",
            Benchmark::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Generated { h_far: f64, h_tip: f64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub material: MaterialParams,
    pub descent: DescentOptions,
    pub program: LoadProgram,
    pub mesh: MeshSource,
    pub out_dir: PathBuf,
    pub snapshot_every: usize,
}

pub const DEFAULT_SNAPSHOT_EVERY: usize = 50;

impl RunConfig {
    /// Paper parameters of a benchmark; `Custom` starts from the tension
    /// values.
    pub fn preset(benchmark: Benchmark) -> Self {
        let (nu, program) = match benchmark {
            Benchmark::Shear => (10.0, LoadProgram::shear()),
            Benchmark::Tension | Benchmark::Custom => (1.0, LoadProgram::tension()),
        };
        RunConfig {
            benchmark,
            material: MaterialParams { nu_reg: nu, ..MaterialParams::default() },
            descent: DescentOptions::default(),
            program,
            mesh: MeshSource::Generated { h_far: DEFAULT_H_FAR, h_tip: DEFAULT_H_TIP },
            out_dir: PathBuf::from("out"),
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let v = |e: String| CliError::Validation(e);
        self.material.validate().map_err(|e| v(e.to_string()))?;
        self.descent.validate().map_err(|e| v(e.to_string()))?;
        self.program.validate().map_err(|e| v(e.to_string()))?;
        if self.snapshot_every == 0 {
            return Err(v("snapshot cadence must be at least 1".into()));
        }
        if let MeshSource::Generated { h_far, h_tip } = self.mesh {
            if !(h_tip > 0.0 && h_tip <= h_far && h_tip < 0.01) {
                return Err(v(format!("need 0 < h_tip <= h_far and h_tip < 0.01, got {h_far}, {h_tip}")));
            }
        }
        Ok(())
    }

    /// Flat `key=value` listing of every resolved setting.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let d = &self.descent;
        let mut kv = vec![
            ("benchmark", self.benchmark.name().to_string()),
            ("lambda", self.material.lambda.to_string()),
            ("mu", self.material.mu.to_string()),
            ("gc", self.material.g_c.to_string()),
            ("nu", self.material.nu_reg.to_string()),
            ("step_size", d.step_size.to_string()),
            ("stop_tol", d.stop_tol.to_string()),
            ("max_inner_iterations", d.max_inner_iterations.to_string()),
            ("quality_threshold", d.quality_threshold.to_string()),
            ("h_far", d.h_far.to_string()),
            ("h_tip", d.h_tip.to_string()),
            ("mu_def_tip", d.deformation.mu_tip.to_string()),
            ("mu_def_far", d.deformation.mu_far.to_string()),
            ("mu_def_distance", d.deformation.grading_distance.to_string()),
            ("direction_x", self.program.direction.x.to_string()),
            ("direction_y", self.program.direction.y.to_string()),
            ("coarse_increment", self.program.coarse_increment.to_string()),
            ("coarse_until", self.program.coarse_until.to_string()),
            ("fine_increment", self.program.fine_increment.to_string()),
            ("max_displacement", self.program.max_displacement.to_string()),
            ("out", self.out_dir.display().to_string()),
            ("snapshot_every", self.snapshot_every.to_string()),
        ];
        match &self.mesh {
            MeshSource::Generated { .. } => kv.push(("mesh", "generated".to_string())),
            MeshSource::File(p) => kv.push(("mesh", p.display().to_string())),
        }
        kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Debug, Parser)]
#[command(name = "shapefrac", about = "Quasi-static brittle fracture by shape-optimization descent", version)]
pub struct Args {
    /// Benchmark preset: tension, shear or custom.
    #[arg(long)]
    pub benchmark: Option<String>,
    /// Flat key=value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Gmsh 2.x ASCII mesh to start from instead of the generated one.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fracture toughness G_c (N/mm).
    #[arg(long)]
    pub gc: Option<f64>,
    /// Slit-area regularization weight.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Descent step size.
    #[arg(long = "step-size")]
    pub step_size: Option<f64>,
    /// Largest applied displacement (mm).
    #[arg(long = "max-displacement")]
    pub max_displacement: Option<f64>,
    /// Write a VTK snapshot every k load steps.
    #[arg(long = "snapshot-every")]
    pub snapshot_every: Option<usize>,
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
        map.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(map)
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Usage(format!("cannot parse value '{value}' for key '{key}'")))
}

fn apply_key(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), CliError> {
    let d = &mut cfg.descent;
    match key {
        "benchmark" => {}
        "lambda" => cfg.material.lambda = number(key, value)?,
        "mu" => cfg.material.mu = number(key, value)?,
        "gc" => cfg.material.g_c = number(key, value)?,
        "nu" => cfg.material.nu_reg = number(key, value)?,
        "step_size" => d.step_size = number(key, value)?,
        "stop_tol" => d.stop_tol = number(key, value)?,
        "max_inner_iterations" => d.max_inner_iterations = number(key, value)?,
        "quality_threshold" => d.quality_threshold = number(key, value)?,
        "h_far" | "h_tip" => {
            let x: f64 = number(key, value)?;
            if key == "h_far" {
                d.h_far = x;
            } else {
                d.h_tip = x;
            }
            if let MeshSource::Generated { .. } = cfg.mesh {
                cfg.mesh = MeshSource::Generated { h_far: d.h_far, h_tip: d.h_tip };
            }
        }
        "mu_def_tip" => d.deformation.mu_tip = number(key, value)?,
        "mu_def_far" => d.deformation.mu_far = number(key, value)?,
        "mu_def_distance" => d.deformation.grading_distance = number(key, value)?,
        "direction_x" => cfg.program.direction.x = number(key, value)?,
        "direction_y" => cfg.program.direction.y = number(key, value)?,
        "coarse_increment" => cfg.program.coarse_increment = number(key, value)?,
        "coarse_until" => cfg.program.coarse_until = number(key, value)?,
        "fine_increment" => cfg.program.fine_increment = number(key, value)?,
        "max_displacement" => cfg.program.max_displacement = number(key, value)?,
        "mesh" => cfg.mesh = MeshSource::File(PathBuf::from(value)),
        "out" => cfg.out_dir = PathBuf::from(value),
        "snapshot_every" => cfg.snapshot_every = number(key, value)?,
        other => return Err(CliError::Usage(format!("unknown configuration key '{other}'"))),
    }
    Ok(())
}

/// Resolves presets, then the config file, then command-line flags.
pub fn resolve_config(args: &Args, config_text: Option<&str>) -> Result<RunConfig, CliError> {
    let file = match config_text {
        Some(text) => parse_key_values(text)?,
        None => BTreeMap::new(),
    };
    let benchmark = match (&args.benchmark, file.get("benchmark")) {
        (Some(b), _) | (None, Some(b)) => b.parse()?,
        (None, None) => Benchmark::Tension,
    };
    let mut cfg = RunConfig::preset(benchmark);
    for (k, v) in &file {
        apply_key(&mut cfg, k, v)?;
    }
    if let Some(p) = &args.mesh {
        cfg.mesh = MeshSource::File(p.clone());
    }
    if let Some(p) = &args.out {
        cfg.out_dir = p.clone();
    }
    if let Some(x) = args.gc {
        cfg.material.g_c = x;
    }
    if let Some(x) = args.nu {
        cfg.material.nu_reg = x;
    }
    if let Some(x) = args.step_size {
        cfg.descent.step_size = x;
    }
    if let Some(x) = args.max_displacement {
        cfg.program.max_displacement = x;
    }
    if let Some(x) = args.snapshot_every {
        cfg.snapshot_every = x;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads the config file named by `args` (if any) and resolves the settings.
pub fn load_config(args: &Args) -> Result<RunConfig, CliError> {
    let text = match &args.config {
        Some(path) => Some(
            fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?,
        ),
        None => None,
    };
    resolve_config(args, text.as_deref())
}

/// Parses command-line arguments (including the program name) into a
/// resolved configuration.
pub fn parse_config<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = Args::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string().trim_end().to_string()))?;
    load_config(&args)
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

pub const CSV_HEADER: &str =
    "step,displacement_mm,tau_x,tau_y,E_bulk,E_fracture,J_reg,crack_length_mm,nodes,triangles,inner_iters,remeshes";

/// CSV text for the records; floats use the shortest round-trip form.
pub fn step_csv(records: &[StepRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            i + 1,
            r.displacement,
            r.tau.x,
            r.tau.y,
            r.e_bulk,
            r.e_fracture,
            r.j_reg,
            r.crack_length,
            r.nodes,
            r.triangles,
            r.inner_iterations,
            r.remeshes
        );
    }
    s
}

pub fn write_step_csv(path: &Path, records: &[StepRecord]) -> io::Result<()> {
    write_atomic(path, step_csv(records).as_bytes())
}

/// Parses a file written by [`write_step_csv`]. Stall flags are not stored and
/// read back as `false`.
pub fn read_step_csv(text: &str) -> Result<Vec<StepRecord>, CliError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::Validation("unexpected steps.csv header".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 12 {
                return Err(CliError::Validation(format!("expected 12 fields, got {}", f.len())));
            }
            Ok(StepRecord {
                displacement: number("displacement_mm", f[1])?,
                tau: Point::new(number("tau_x", f[2])?, number("tau_y", f[3])?),
                e_bulk: number("E_bulk", f[4])?,
                e_fracture: number("E_fracture", f[5])?,
                j_reg: number("J_reg", f[6])?,
                crack_length: number("crack_length_mm", f[7])?,
                nodes: number("nodes", f[8])?,
                triangles: number("triangles", f[9])?,
                inner_iterations: number("inner_iters", f[10])?,
                remeshes: number("remeshes", f[11])?,
                stalled: false,
            })
        })
        .collect()
}

/// Legacy VTK (3.0, ASCII) unstructured grid of the mesh and its fields.
pub fn snapshot_vtk(mesh: &TriMesh, w: &NodalVectorField, v: &NodalVectorField, phi: &NodalScalarField) -> String {
    let n = mesh.node_count();
    let t = mesh.triangle_count();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nshapefrac snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.nodes() {
        let _ = writeln!(s, "{} {} 0", p.x, p.y);
    }
    let _ = writeln!(s, "CELLS {t} {}", 4 * t);
    for tri in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {t}");
    for _ in 0..t {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, field) in [("displacement", w), ("deformation", v)] {
        let _ = writeln!(s, "VECTORS {name} double");
        for i in 0..n {
            let p = field.get(i).copied().unwrap_or_else(Point::zeros);
            let _ = writeln!(s, "{} {} 0", p.x, p.y);
        }
    }
    s.push_str("SCALARS phi double 1\nLOOKUP_TABLE default\n");
    for i in 0..n {
        let _ = writeln!(s, "{}", phi.get(i).copied().unwrap_or(0.0));
    }
    let _ = writeln!(s, "CELL_DATA {t}");
    s.push_str("SCALARS quality double 1\nLOOKUP_TABLE default\n");
    for q in mesh.triangle_qualities() {
        let _ = writeln!(s, "{q}");
    }
    s
}

pub fn write_snapshot(
    dir: &Path,
    step: usize,
    mesh: &TriMesh,
    w: &NodalVectorField,
    v: &NodalVectorField,
    phi: &NodalScalarField,
) -> io::Result<PathBuf> {
    let path = dir.join(format!("snapshot_{step}.vtk"));
    write_atomic(&path, snapshot_vtk(mesh, w, v, phi).as_bytes())?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub onset: Option<f64>,
    pub termination: Termination,
    pub stalled_steps: usize,
    pub final_crack_length: f64,
}

pub fn load_mesh(cfg: &RunConfig) -> Result<TriMesh, CliError> {
    match &cfg.mesh {
        MeshSource::Generated { h_far, h_tip } => generate_notched_square(*h_far, *h_tip)
            .map_err(|e| CliError::Run(OptimizerError::Mesh(e))),
        MeshSource::File(path) => {
            let f = fs::File::open(path)
                .map_err(|e| CliError::Usage(format!("cannot open mesh {}: {e}", path.display())))?;
            read_msh(io::BufReader::new(f)).map_err(|e| CliError::Run(OptimizerError::Mesh(e)))
        }
    }
}

fn summary_text(cfg: &RunConfig, summary: &RunSummary) -> String {
    let mut s = String::new();
    for (k, v) in cfg.to_key_values() {
        let _ = writeln!(s, "{k}={v}");
    }
    let onset = summary.onset.map_or_else(|| "none".to_string(), |x| x.to_string());
    let _ = writeln!(s, "steps={}", summary.steps);
    let _ = writeln!(s, "onset_displacement={onset}");
    let termination = match summary.termination {
        Termination::MaxDisplacement => "max_displacement",
        Termination::CrackReachedBoundary => "crack_reached_boundary",
    };
    let _ = writeln!(s, "termination={termination}");
    let _ = writeln!(s, "stalled_steps={}", summary.stalled_steps);
    let _ = writeln!(s, "final_crack_length={}", summary.final_crack_length);
    s
}

/// Runs the configured load program and writes `steps.csv`, the snapshots and
/// `run.summary` into the output directory.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mesh = load_mesh(cfg)?;
    let csv_path = cfg.out_dir.join("steps.csv");
    let mut records: Vec<StepRecord> = Vec::new();
    let result = run_load_program(&mesh, &cfg.material, &cfg.program, &cfg.descent, |outcome| {
        records.push(outcome.record.clone());
        write_step_csv(&csv_path, &records)?;
        if outcome.index % cfg.snapshot_every == 0 || outcome.last {
            write_snapshot(
                &cfg.out_dir,
                outcome.index,
                outcome.mesh,
                &outcome.report.state,
                &outcome.report.deformation,
                &outcome.report.phi,
            )?;
        }
        Ok(())
    })?;
    let summary = RunSummary {
        steps: result.records.len(),
        onset: detect_onset(&result.records, DEFAULT_ONSET_THRESHOLD),
        termination: result.termination,
        stalled_steps: result.records.iter().filter(|r| r.stalled).count(),
        final_crack_length: result.mesh.crack_length(),
    };
    write_atomic(&cfg.out_dir.join("run.summary"), summary_text(cfg, &summary).as_bytes())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        parse_config(std::iter::once("shapefrac").chain(args.iter().copied()))
    }

    #[test]
    fn tension_preset() {
        let cfg = parse(&["--benchmark", "tension"]).unwrap();
        assert_eq!(cfg.material.nu_reg, 1.0);
        assert_eq!(cfg.program.direction, Point::new(0.0, 1.0));
        assert_eq!(cfg.program.coarse_increment, 1e-3);
        assert_eq!(cfg.program.coarse_until, 4e-3);
        assert_eq!(cfg.program.fine_increment, 1e-5);
    }

    #[test]
    fn shear_preset() {
        let cfg = parse(&["--benchmark", "shear"]).unwrap();
        assert_eq!(cfg.material.nu_reg, 10.0);
        assert_eq!(cfg.program.direction, Point::new(-1.0, 0.0));
        assert_eq!(cfg.program.coarse_increment, 1e-4);
        assert_eq!(cfg.program.coarse_until, 8e-3);
        assert_eq!(cfg.program.max_displacement, 2.22e-2);
    }

    #[test]
    fn bogus_benchmark_is_usage_error() {
        let err = parse(&["--benchmark", "bogus"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = parse(&["--frobnicate"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn flags_override_file_over_preset() {
        let args = Args::try_parse_from(["shapefrac", "--nu", "3", "--benchmark", "shear"]).unwrap();
        let cfg = resolve_config(&args, Some("nu = 5\ngc=3.1 # comment\nh_far=0.08\n")).unwrap();
        assert_eq!(cfg.material.nu_reg, 3.0);
        assert_eq!(cfg.material.g_c, 3.1);
        assert_eq!(cfg.mesh, MeshSource::Generated { h_far: 0.08, h_tip: DEFAULT_H_TIP });
        assert_eq!(cfg.benchmark, Benchmark::Shear);
    }

    #[test]
    fn unknown_key_and_bad_values() {
        let args = Args::try_parse_from(["shapefrac"]).unwrap();
        assert!(matches!(resolve_config(&args, Some("colour=blue")), Err(CliError::Usage(_))));
        assert!(matches!(resolve_config(&args, Some("gc=abc")), Err(CliError::Usage(_))));
        assert!(matches!(resolve_config(&args, Some("step_size=-1")), Err(CliError::Validation(_))));
        assert!(matches!(resolve_config(&args, Some("snapshot_every=0")), Err(CliError::Validation(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rec = StepRecord {
            displacement: 4.53e-3,
            tau: Point::new(-1.0 / 3.0, 0.1 + 0.2),
            e_bulk: std::f64::consts::PI,
            e_fracture: 1e-300,
            j_reg: 2.0_f64.sqrt(),
            crack_length: 1.0314159,
            nodes: 1220,
            triangles: 2438,
            inner_iterations: 17,
            remeshes: 2,
            stalled: false,
        };
        let text = step_csv(std::slice::from_ref(&rec));
        assert_eq!(text.lines().count(), 2);
        assert!(!text.contains('\r'));
        let back = read_step_csv(&text).unwrap();
        assert_eq!(back, vec![rec]);
    }

    #[test]
    fn vtk_layout() {
        let mesh = crate::mesh::generate_unit_square(0.5).unwrap();
        let n = mesh.node_count();
        let text = snapshot_vtk(
            &mesh,
            &NodalVectorField::zeros(n),
            &NodalVectorField::zeros(n),
            &NodalScalarField(vec![0.0; n]),
        );
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains(&format!("POINTS {n} double\n")));
        let cells: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.starts_with("CELLS"))
            .skip(1)
            .take(mesh.triangle_count())
            .collect();
        assert!(cells.iter().all(|l| l.starts_with("3 ")));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
