mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shapefrac::fem::{solve_displacement, DirichletBC, MaterialParams};
use shapefrac::mesh::{generate_notched_square, Point};
use shapefrac::shapegrad::assemble_shape_derivative;

use common::{objective, smooth_direction};

#[test]
fn shape_derivative_matches_central_differences() {
    let mesh = generate_notched_square(0.05, 0.005).unwrap();
    let mat = MaterialParams::default();
    let bc = DirichletBC::top(Point::new(0.0, 4e-3));
    let w = solve_displacement(&mesh, &mat, &bc).unwrap();
    let g = assemble_shape_derivative(&mesh, &mat, &w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-6;
    for trial in 0..10 {
        let dir = smooth_direction(&mesh, &mut rng);
        let plus = objective(&mesh.deform(&dir, eps).unwrap(), &mat, &bc);
        let minus = objective(&mesh.deform(&dir, -eps).unwrap(), &mat, &bc);
        let fd = (plus - minus) / (2.0 * eps);
        let an = g.apply(&dir);
        let rel = (an - fd).abs() / fd.abs();
        assert!(rel <= 1e-4, "trial {trial}: analytic {an:e}, central difference {fd:e}");
    }
}
