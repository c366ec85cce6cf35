//! Deformation-induced quantities: transformation gradient and
//! determinant, transformed material tensors on volume and interface, and
//! their directional derivatives with respect to the deformation field.
//!
//! All quantities are evaluated lazily per quadrature point from the
//! gradient of the nodal deformation field; nothing is stored globally.

use crate::geometry::Mesh;
use crate::linalg::*;
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;

/// Bulk permittivity and Drude surface-conductivity parameters
/// (nondimensionalized).
#[derive(Debug, Clone, Copy)]
pub struct MaterialParameters {
    pub eps: CMat2,
    pub omega: f64,
    pub omega_p: f64,
    pub tau_relax: f64,
}

impl MaterialParameters {
    /// Isotropic host `eps = I` with the Drude constants used throughout
    /// the experiments.
    pub fn isotropic_drude(omega: f64, omega_p: f64, tau_relax: f64) -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        MaterialParameters {
            eps: [[one, zero], [zero, one]],
            omega,
            omega_p,
            tau_relax,
        }
    }

    pub fn sigma(&self) -> Complex64 {
        drude_sigma(self.omega, self.omega_p, self.tau_relax)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0) {
            return Err(Error::Config(format!("omega must be > 0, got {}", self.omega)));
        }
        if self.omega_p < 0.0 {
            return Err(Error::Config(format!(
                "omega_p must be >= 0, got {}",
                self.omega_p
            )));
        }
        if !(self.tau_relax > 0.0) {
            return Err(Error::Config(format!(
                "tau_relax must be > 0, got {}",
                self.tau_relax
            )));
        }
        let sym = |a: Complex64, b: Complex64| (a - b).norm() < 1e-12;
        if !sym(self.eps[0][1], self.eps[1][0]) {
            return Err(Error::Config("eps must be symmetric".into()));
        }
        // Im(eps) positive semidefinite: diagonal >= 0 and det >= 0
        let (ixx, ixy, iyy) = (self.eps[0][0].im, self.eps[0][1].im, self.eps[1][1].im);
        if ixx < -1e-14 || iyy < -1e-14 || ixx * iyy - ixy * ixy < -1e-14 {
            return Err(Error::Config("Im(eps) must be positive semidefinite".into()));
        }
        Ok(())
    }
}

/// Drude surface conductivity `sigma(omega) = i omega_p / (omega + i/tau)`.
pub fn drude_sigma(omega: f64, omega_p: f64, tau_relax: f64) -> Complex64 {
    Complex64::new(0.0, omega_p) / Complex64::new(omega, 1.0 / tau_relax)
}

/// Nodal deformation of the reference cell with zero boundary trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub nodal: Vec<[f64; 2]>,
}

impl DeformationField {
    pub fn zero(mesh: &Mesh) -> Self {
        DeformationField {
            nodal: vec![[0.0, 0.0]; mesh.vertex_count()],
        }
    }

    /// Samples a function at the vertices, forcing the boundary trace to
    /// zero.
    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let nodal = mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| {
                if mesh.is_boundary_vertex(i) {
                    [0.0, 0.0]
                } else {
                    f(v[0], v[1])
                }
            })
            .collect();
        DeformationField { nodal }
    }

    /// Smooth random admissible deformation: a few low-frequency modes
    /// under a bump that vanishes on the square boundary. `amplitude`
    /// bounds the pointwise magnitude; gradients scale like
    /// `amplitude * pi * (modes + 1)`.
    pub fn smooth_random(mesh: &Mesh, amplitude: f64, seed: u64) -> Self {
        use std::f64::consts::PI;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut coef = [[0.0f64; 6]; 2];
        for comp in coef.iter_mut() {
            for c in comp.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        Self::from_fn(mesh, |x, y| {
            let bump = (PI * x).sin() * (PI * y).sin();
            let mut q = [0.0, 0.0];
            for m in 0..2 {
                let c = &coef[m];
                let v = c[0]
                    + c[1] * (PI * x).cos()
                    + c[2] * (PI * y).cos()
                    + c[3] * (2.0 * PI * x).sin()
                    + c[4] * (2.0 * PI * y).sin()
                    + c[5] * (PI * x).sin() * (PI * y).sin();
                q[m] = amplitude * bump * v / 3.0;
            }
            q
        })
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if self.nodal.len() != mesh.vertex_count() {
            return Err(Error::Validation(format!(
                "deformation has {} nodes, mesh has {} vertices",
                self.nodal.len(),
                mesh.vertex_count()
            )));
        }
        for (i, v) in self.nodal.iter().enumerate() {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::Validation(format!("non-finite value at vertex {i}")));
            }
            if mesh.is_boundary_vertex(i) && (v[0] != 0.0 || v[1] != 0.0) {
                return Err(Error::Validation(format!(
                    "nonzero boundary trace at vertex {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Transformation gradient, determinant and inverse at one quadrature
/// point.
#[derive(Debug, Clone, Copy)]
pub struct TransformState {
    pub f: Mat2,
    pub j: f64,
    pub f_inv: Mat2,
}

impl TransformState {
    /// Builds the state from the deformation gradient `grad_q` (row
    /// convention: `grad_q[i][j] = d q_i / d y_j`).
    pub fn from_grad(grad_q: &Mat2) -> Self {
        let f = [
            [1.0 + grad_q[0][0], grad_q[0][1]],
            [grad_q[1][0], 1.0 + grad_q[1][1]],
        ];
        let j = det2(&f);
        let f_inv = if j != 0.0 { inv2(&f) } else { [[0.0; 2]; 2] };
        TransformState { f, j, f_inv }
    }

    pub fn identity() -> Self {
        TransformState {
            f: IDENTITY,
            j: 1.0,
            f_inv: IDENTITY,
        }
    }

    /// `|F tau|` for a unit tangent.
    pub fn tangent_stretch(&self, tau: &[f64; 2]) -> f64 {
        norm2(&mat_vec(&self.f, tau))
    }

    /// `|F^{-T} nu|` for a unit normal.
    pub fn normal_stretch(&self, nu: &[f64; 2]) -> f64 {
        norm2(&matt_vec(&self.f_inv, nu))
    }
}

/// Transformed bulk permittivity `F^{-1} eps F^{-T} J`.
pub fn transformed_permittivity(eps: &CMat2, state: &TransformState) -> Result<CMat2> {
    if state.j <= 0.0 {
        return Err(Error::DegenerateDeformation(format!(
            "transformation determinant {} is not positive",
            state.j
        )));
    }
    Ok(congruence_scaled(&state.f_inv, eps, state.j))
}

/// Transformed scalar surface conductivity in 2D, reduced with the
/// planar Nanson identity `|F^{-T} nu| J = |F tau|`:
/// `sigma_hat = sigma / |F tau|`.
pub fn transformed_conductivity(
    sigma: Complex64,
    state: &TransformState,
    tau: &[f64; 2],
) -> Result<Complex64> {
    if state.j <= 0.0 {
        return Err(Error::DegenerateDeformation(format!(
            "transformation determinant {} is not positive",
            state.j
        )));
    }
    let stretch = state.tangent_stretch(tau);
    if stretch < 1e-12 {
        return Err(Error::DegenerateDeformation(
            "tangent stretch below 1e-12".into(),
        ));
    }
    Ok(sigma / stretch)
}

/// Same coefficient without the Nanson reduction:
/// `sigma |F^{-T} nu| J / |F tau|^2`. Kept as the second route of the
/// dual-formula check.
pub fn transformed_conductivity_explicit(
    sigma: Complex64,
    state: &TransformState,
    tau: &[f64; 2],
    nu: &[f64; 2],
) -> Result<Complex64> {
    if state.j <= 0.0 {
        return Err(Error::DegenerateDeformation(format!(
            "transformation determinant {} is not positive",
            state.j
        )));
    }
    let stretch = state.tangent_stretch(tau);
    if stretch < 1e-12 {
        return Err(Error::DegenerateDeformation(
            "tangent stretch below 1e-12".into(),
        ));
    }
    Ok(sigma * state.normal_stretch(nu) * state.j / (stretch * stretch))
}

/// Directional derivatives of the transform quantities along a
/// perturbation with gradient `g = grad(delta q)`.
#[derive(Debug, Clone, Copy)]
pub struct TransformDirectional {
    pub d_f: Mat2,
    pub d_j: f64,
    pub d_f_inv: Mat2,
}

impl TransformState {
    pub fn directional(&self, g: &Mat2) -> TransformDirectional {
        let d_j = self.j * trace2(&matmul2(&self.f_inv, g));
        let d_f_inv = {
            let m = matmul2(&matmul2(&self.f_inv, g), &self.f_inv);
            [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
        };
        TransformDirectional {
            d_f: *g,
            d_j,
            d_f_inv,
        }
    }

    /// Derivative of `|F tau|`.
    pub fn d_tangent_stretch(&self, dir: &TransformDirectional, tau: &[f64; 2]) -> f64 {
        let ft = mat_vec(&self.f, tau);
        dot2(&ft, &mat_vec(&dir.d_f, tau)) / norm2(&ft)
    }

    /// Derivative of `|F^{-T} nu|`.
    pub fn d_normal_stretch(&self, dir: &TransformDirectional, nu: &[f64; 2]) -> f64 {
        let fn_ = matt_vec(&self.f_inv, nu);
        dot2(&fn_, &matt_vec(&dir.d_f_inv, nu)) / norm2(&fn_)
    }
}

/// Chain rule for the transformed permittivity.
pub fn d_transformed_permittivity(
    eps: &CMat2,
    state: &TransformState,
    dir: &TransformDirectional,
) -> CMat2 {
    // d(F^-1 eps F^-T J) = dF^-1 eps F^-T J + F^-1 eps dF^-T J + F^-1 eps F^-T dJ
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    let fi = &state.f_inv;
    let dfi = &dir.d_f_inv;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    acc += eps[k][l]
                        * (dfi[i][k] * fi[j][l] * state.j
                            + fi[i][k] * dfi[j][l] * state.j
                            + fi[i][k] * fi[j][l] * dir.d_j);
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Chain rule for the Nanson-reduced surface coefficient
/// `sigma / |F tau|`.
pub fn d_transformed_conductivity(
    sigma: Complex64,
    state: &TransformState,
    dir: &TransformDirectional,
    tau: &[f64; 2],
) -> Complex64 {
    let stretch = state.tangent_stretch(tau);
    -sigma * state.d_tangent_stretch(dir, tau) / (stretch * stretch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_state(rng: &mut impl Rng, scale: f64) -> TransformState {
        loop {
            let g = [
                [rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)],
                [rng.gen_range(-scale..scale), rng.gen_range(-scale..scale)],
            ];
            let s = TransformState::from_grad(&g);
            if s.j > 0.05 {
                return s;
            }
        }
    }

    #[test]
    fn drude_reference_values() {
        // oracle: i*wp*(w - i/tau)/(w^2 + 1/tau^2), evaluated directly
        let s = drude_sigma(0.3, 4.0 / 137.0, 100.0);
        assert!((s.re - 0.00324).abs() < 1e-5, "{s}");
        assert!((s.im - 0.09722).abs() < 1e-5, "{s}");
        let s5 = drude_sigma(0.5, 4.0 / 137.0, 100.0);
        assert!((s5.re - 0.0011674).abs() < 1e-5, "{s5}");
        assert!((s5.im - 0.0583708).abs() < 1e-5, "{s5}");
        assert_eq!(drude_sigma(0.7, 0.0, 100.0), Complex64::new(0.0, 0.0));
        assert!(drude_sigma(0.42, 4.0 / 137.0, 50.0).re > 0.0);
    }

    #[test]
    fn identity_state_is_neutral() {
        let s = TransformState::from_grad(&[[0.0; 2]; 2]);
        assert_eq!(s.j, 1.0);
        let eps = [
            [Complex64::new(2.0, 0.1), Complex64::new(0.3, 0.0)],
            [Complex64::new(0.3, 0.0), Complex64::new(1.5, 0.2)],
        ];
        let t = transformed_permittivity(&eps, &s).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((t[i][j] - eps[i][j]).norm() < 1e-15);
            }
        }
        let tau = [1.0, 0.0];
        let sg = Complex64::new(0.1, 0.9);
        assert!((transformed_conductivity(sg, &s, &tau).unwrap() - sg).norm() < 1e-15);
    }

    #[test]
    fn isotropic_scaling_in_2d() {
        // F = 2I: eps_hat = (1/4) * 4 * I = I, sigma_hat = sigma/2
        let s = TransformState::from_grad(&[[1.0, 0.0], [0.0, 1.0]]);
        let eps = [
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
            [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        ];
        let t = transformed_permittivity(&eps, &s).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((t[i][j] - want).norm() < 1e-15);
            }
        }
        let sg = Complex64::new(0.2, 0.7);
        let tau = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];
        assert!((transformed_conductivity(sg, &s, &tau).unwrap() - sg / 2.0).norm() < 1e-15);
    }

    #[test]
    fn degenerate_determinant_is_rejected() {
        let s = TransformState::from_grad(&[[-2.0, 0.0], [0.0, 0.0]]);
        assert!(s.j < 0.0);
        let eps = MaterialParameters::isotropic_drude(0.3, 0.0, 1.0).eps;
        assert!(matches!(
            transformed_permittivity(&eps, &s),
            Err(Error::DegenerateDeformation(_))
        ));
    }

    #[test]
    fn nanson_identity_and_dual_conductivity_route() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = random_state(&mut rng, 0.8);
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let tau = [ang.cos(), ang.sin()];
            let nu = [tau[1], -tau[0]];
            // planar Nanson identity
            assert!(
                (s.normal_stretch(&nu) * s.j - s.tangent_stretch(&tau)).abs() < 1e-12,
                "J={}",
                s.j
            );
            let sg = Complex64::new(0.3, 0.8);
            let a = transformed_conductivity(sg, &s, &tau).unwrap();
            let b = transformed_conductivity_explicit(sg, &s, &tau, &nu).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn transformed_tensors_keep_symmetry_and_definiteness() {
        // Im eps_hat and Re sigma_hat positive (semi)definite for J > 0
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let eps = [
            [Complex64::new(1.0, 0.2), Complex64::new(0.1, 0.05)],
            [Complex64::new(0.1, 0.05), Complex64::new(1.3, 0.25)],
        ];
        for _ in 0..50 {
            let s = random_state(&mut rng, 0.7);
            let t = transformed_permittivity(&eps, &s).unwrap();
            assert!((t[0][1] - t[1][0]).norm() < 1e-13);
            // eigenvalues of the 2x2 symmetric imaginary part
            let (a, b, c) = (t[0][0].im, t[0][1].im, t[1][1].im);
            assert!(a + c > 0.0 && a * c - b * b > -1e-15);
            // real part positive definite for eps = I
            let id = MaterialParameters::isotropic_drude(1.0, 0.0, 1.0).eps;
            let ti = transformed_permittivity(&id, &s).unwrap();
            let (a, b, c) = (ti[0][0].re, ti[0][1].re, ti[1][1].re);
            assert!(a > 0.0 && a * c - b * b > 0.0);
            let sg = drude_sigma(0.3, 4.0 / 137.0, 100.0);
            let sh = transformed_conductivity(sg, &s, &[1.0, 0.0]).unwrap();
            assert!(sh.re > 0.0);
        }
    }

    #[test]
    fn directional_derivative_of_det_at_identity() {
        let s = TransformState::identity();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let mut e = [[0.0; 2]; 2];
            e[i][j] = 1.0;
            let d = s.directional(&e);
            let want = if i == j { 1.0 } else { 0.0 }; // tr(E)
            assert!((d.d_j - want).abs() < 1e-15);
        }
        let zero = s.directional(&[[0.0; 2]; 2]);
        assert_eq!(zero.d_j, 0.0);
        assert_eq!(zero.d_f_inv, [[0.0; 2]; 2]);
    }

    /// Central finite differences of every primal quantity along a step
    /// sweep; the best relative error must be tiny.
    #[test]
    fn directional_derivatives_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let eps = [
            [Complex64::new(1.2, 0.3), Complex64::new(0.2, 0.1)],
            [Complex64::new(0.2, 0.1), Complex64::new(0.9, 0.4)],
        ];
        let sg = Complex64::new(0.4, 1.1);
        for trial in 0..10 {
            let g0 = [
                [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)],
                [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)],
            ];
            let dg = [
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            ];
            let s0 = TransformState::from_grad(&g0);
            if s0.j < 0.2 {
                continue;
            }
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let tau = [ang.cos(), ang.sin()];
            let dir = s0.directional(&dg);
            let at = |t: f64| {
                let g = [
                    [g0[0][0] + t * dg[0][0], g0[0][1] + t * dg[0][1]],
                    [g0[1][0] + t * dg[1][0], g0[1][1] + t * dg[1][1]],
                ];
                TransformState::from_grad(&g)
            };
            let check = |name: &str, analytic: f64, primal: &dyn Fn(&TransformState) -> f64| {
                let mut best = f64::INFINITY;
                for k in 4..=7 {
                    let h = 10f64.powi(-k);
                    let fd = (primal(&at(h)) - primal(&at(-h))) / (2.0 * h);
                    let scale = analytic.abs().max(1e-8);
                    best = best.min((fd - analytic).abs() / scale);
                }
                assert!(best < 1e-7, "{name} trial {trial}: best rel err {best}");
            };
            check("J", dir.d_j, &|s| s.j);
            check("Finv00", dir.d_f_inv[0][0], &|s| s.f_inv[0][0]);
            check("Finv01", dir.d_f_inv[0][1], &|s| s.f_inv[0][1]);
            check("|Ftau|", s0.d_tangent_stretch(&dir, &tau), &|s| {
                s.tangent_stretch(&tau)
            });
            let nu = [tau[1], -tau[0]];
            check("|F-Tnu|", s0.d_normal_stretch(&dir, &nu), &|s| {
                s.normal_stretch(&nu)
            });
            let de = d_transformed_permittivity(&eps, &s0, &dir);
            for i in 0..2 {
                for j in 0..2 {
                    check(&format!("eps_hat[{i}][{j}].re"), de[i][j].re, &|s| {
                        transformed_permittivity(&eps, s).unwrap()[i][j].re
                    });
                    check(&format!("eps_hat[{i}][{j}].im"), de[i][j].im, &|s| {
                        transformed_permittivity(&eps, s).unwrap()[i][j].im
                    });
                }
            }
            let ds = d_transformed_conductivity(sg, &s0, &dir, &tau);
            check("sigma_hat.re", ds.re, &|s| {
                transformed_conductivity(sg, s, &tau).unwrap().re
            });
            check("sigma_hat.im", ds.im, &|s| {
                transformed_conductivity(sg, s, &tau).unwrap().im
            });
        }
    }

    #[test]
    fn q1_reproduces_linear_maps_on_mesh() {
        use crate::fem::Discretization;
        let mesh = crate::geometry::generate_reference_mesh(0.3, 1).unwrap();
        let a = [[0.08, -0.05], [0.03, 0.06]];
        let q = DeformationField::from_fn(&mesh, |x, y| {
            [a[0][0] * x + a[0][1] * y, a[1][0] * x + a[1][1] * y]
        });
        let disc = Discretization::new(mesh).unwrap();
        // interior cells only: the field is clipped to zero on the boundary
        for ci in 0..disc.mesh.cell_count() {
            if disc.mesh.cells[ci]
                .iter()
                .any(|&v| disc.mesh.is_boundary_vertex(v))
            {
                continue;
            }
            for qp in 0..4 {
                let g = disc.deformation_gradient(&q, ci, qp);
                let s = TransformState::from_grad(&g);
                for i in 0..2 {
                    for j in 0..2 {
                        let want = if i == j { 1.0 } else { 0.0 } + a[i][j];
                        assert!((s.f[i][j] - want).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn deformation_gradient_det_matches_map_jacobian() {
        use crate::fem::{shape_values, Discretization, VOLUME_QP};
        let mesh = crate::geometry::generate_reference_mesh(0.3, 2).unwrap();
        let q = DeformationField::smooth_random(&mesh, 0.05, 42);
        let disc = Discretization::new(mesh).unwrap();
        // finite-difference Jacobian of the composite map
        // xi -> y(xi) + q(y(xi)) in reference-cell coordinates, divided by
        // the Jacobian of the geometric map alone
        for &ci in &[0usize, 17, 40, 99] {
            let verts = disc.mesh.cells[ci];
            let map = |p: [f64; 2], with_q: bool| {
                let phi = shape_values(p);
                let mut out = [0.0, 0.0];
                for a in 0..4 {
                    let v = disc.mesh.vertices[verts[a]];
                    let qv = q.nodal[verts[a]];
                    for d in 0..2 {
                        out[d] += phi[a] * (v[d] + if with_q { qv[d] } else { 0.0 });
                    }
                }
                out
            };
            let fd_jac = |p: [f64; 2], with_q: bool| {
                let h = 1e-6;
                let px = map([p[0] + h, p[1]], with_q);
                let mx = map([p[0] - h, p[1]], with_q);
                let py = map([p[0], p[1] + h], with_q);
                let my = map([p[0], p[1] - h], with_q);
                [
                    [(px[0] - mx[0]) / (2.0 * h), (py[0] - my[0]) / (2.0 * h)],
                    [(px[1] - mx[1]) / (2.0 * h), (py[1] - my[1]) / (2.0 * h)],
                ]
            };
            for (qp, &(p, _)) in VOLUME_QP.iter().enumerate() {
                let g = disc.deformation_gradient(&q, ci, qp);
                let s = TransformState::from_grad(&g);
                let j_fd = det2(&fd_jac(p, true)) / det2(&fd_jac(p, false));
                assert!((j_fd - s.j).abs() < 1e-6, "cell {ci} qp {qp}: {} vs {}", j_fd, s.j);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn nanson_identity_holds_for_admissible_gradients(
            g00 in -0.6f64..0.6, g01 in -0.6f64..0.6,
            g10 in -0.6f64..0.6, g11 in -0.6f64..0.6,
            ang in 0.0f64..std::f64::consts::TAU,
        ) {
            let s = TransformState::from_grad(&[[g00, g01], [g10, g11]]);
            prop_assume!(s.j > 0.01);
            let tau = [ang.cos(), ang.sin()];
            let nu = [tau[1], -tau[0]];
            prop_assert!((s.normal_stretch(&nu) * s.j - s.tangent_stretch(&tau)).abs() < 1e-12);
        }
    }
}
