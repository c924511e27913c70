//! Oracles shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use shapefrac::fem::{bulk_energy, solve_displacement, DirichletBC, MaterialParams, NodalVectorField};
use shapefrac::mesh::{Point, TriMesh};
use shapefrac::shapegrad::triangle_gradients;

/// Reduced objective computed from scratch: bulk energy of a fresh state
/// solve plus the two curve functionals.
pub fn objective(mesh: &TriMesh, mat: &MaterialParams, bc: &DirichletBC) -> f64 {
    let w = solve_displacement(mesh, mat, bc).unwrap();
    bulk_energy(mesh, mat, &w) + 0.5 * mat.g_c * mesh.crack_length() + mat.nu_reg * mesh.slit_area()
}

/// Random combination of sin(kπx)·sin(lπy) modes, k, l ≤ 3; vanishes on the
/// outer boundary.
pub fn smooth_direction(mesh: &TriMesh, rng: &mut ChaCha8Rng) -> NodalVectorField {
    let c: Vec<f64> = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pi = std::f64::consts::PI;
    mesh.nodes()
        .iter()
        .map(|p| {
            let mut v = Point::zeros();
            for k in 1..=3 {
                for l in 1..=3 {
                    let s = (k as f64 * pi * p.x).sin() * (l as f64 * pi * p.y).sin();
                    let i = 2 * (3 * (k - 1) + (l - 1));
                    v += Point::new(c[i], c[i + 1]) * s;
                }
            }
            v
        })
        .collect::<Vec<_>>()
        .into()
}

pub fn distance_to_outer(p: Point) -> f64 {
    p.x.min(1.0 - p.x).min(p.y).min(1.0 - p.y)
}

/// Median of ||∇Φ| − 1| over triangles lying entirely at least `exclusion`
/// away from the outer boundary.
pub fn median_gradient_residual(mesh: &TriMesh, phi: &[f64], exclusion: f64) -> f64 {
    let mut r: Vec<f64> = triangle_gradients(mesh, phi)
        .into_iter()
        .enumerate()
        .filter(|(t, _)| mesh.triangle_points(*t).iter().all(|&p| distance_to_outer(p) >= exclusion))
        .map(|(_, g)| (g.norm() - 1.0).abs())
        .collect();
    r.sort_by(|a, b| a.partial_cmp(b).unwrap());
    r[r.len() / 2]
}

/// Nodes of the left edge ordered by y.
pub fn left_edge_chain(mesh: &TriMesh) -> Vec<usize> {
    let mut left: Vec<usize> = (0..mesh.node_count()).filter(|&i| mesh.nodes()[i].x == 0.0).collect();
    left.sort_by(|&a, &b| mesh.nodes()[a].y.partial_cmp(&mesh.nodes()[b].y).unwrap());
    left
}

/// Coefficient of determination of the least-squares line through (x, y).
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    1.0 - ss_res / ss_tot
}
