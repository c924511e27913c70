use shapefrac::fem::{boundary_force, bulk_energy, solve_displacement, DirichletBC, MaterialParams};
use shapefrac::mesh::{generate_notched_square, Point};

// Nested P1 spaces under displacement control: the discrete minimum energy
// can only go down as the space grows.
#[test]
fn energy_decreases_under_uniform_refinement() {
    let mat = MaterialParams::default();
    let bc = DirichletBC::top(Point::new(0.0, 1e-3));
    let mut mesh = generate_notched_square(0.1, 0.008).unwrap();
    let mut energies = Vec::new();
    for _ in 0..3 {
        let w = solve_displacement(&mesh, &mat, &bc).unwrap();
        energies.push(bulk_energy(&mesh, &mat, &w));
        mesh = mesh.refine_uniform();
    }
    assert!(energies.windows(2).all(|e| e[1] < e[0]), "{energies:?}");
    // the decrements shrink: the sequence is converging
    assert!(energies[1] - energies[2] < energies[0] - energies[1]);
}

#[test]
fn reaction_balances_and_is_linear_in_load() {
    let mat = MaterialParams::default();
    let mesh = generate_notched_square(0.08, 0.005).unwrap();
    let forces: Vec<Point> = [1e-3, 2e-3]
        .iter()
        .map(|&d| {
            let w = solve_displacement(&mesh, &mat, &DirichletBC::top(Point::new(0.0, d))).unwrap();
            boundary_force(&mesh, &mat, &w)
        })
        .collect();
    assert!(forces[0].y > 0.0);
    assert!((forces[1] - 2.0 * forces[0]).norm() <= 1e-8 * forces[1].norm());
}
