// quick probe: reference tensor values at several refinements/frequencies
use cellopt::cellproblem::solve_cell_problem;
use cellopt::fem::Discretization;
use cellopt::geometry::generate_reference_mesh;
use cellopt::kinematics::{DeformationField, MaterialParameters};

fn main() {
    for omega in [0.3, 0.4, 0.5] {
        for level in [3usize, 4, 5] {
            let t0 = std::time::Instant::now();
            let mesh = generate_reference_mesh(0.3, level).unwrap();
            let disc = Discretization::new(mesh).unwrap();
            let mat = MaterialParameters::isotropic_drude(omega, 4.0 / 137.0, 100.0);
            let q = DeformationField::zero(&disc.mesh);
            let (_, tensor) = solve_cell_problem(&disc, &q, &mat).unwrap();
            let m = tensor.matrix;
            println!(
                "omega={omega} level={level}: xx={:.5}+{:.5}i xy={:.2e} ({:?})",
                m[0][0].re, m[0][0].im, m[0][1].norm(), t0.elapsed()
            );
        }
    }
}
