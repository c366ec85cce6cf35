//! Deformed cell problem in reference coordinates and the effective
//! permittivity tensor.
//!
//! The corrector fields solve, for i = 1,2 and all periodic test
//! functions phi,
//!
//! ```text
//!   int  eps_hat (F^T e_i + grad chi_i) . grad phi dy
//!     - (1/(i w)) int_S sigma_hat (tau.(F^T e_i) + tau.grad chi_i)(tau.grad phi) do  =  0,
//! ```
//!
//! with `eps_hat = F^-1 eps F^-T J` and the Nanson-reduced surface
//! coefficient `sigma_hat = sigma/|F tau|`. The same transformed
//! coefficients weight the averaging that yields the tensor entries, so
//! one pass of quadrature data serves assembly, averaging and the
//! adjoint right-hand side. Both correctors share one factorization and
//! a single pinned dof fixes the additive gauge.

use crate::fem::{
    assemble, complex_grad, CscMatrix, Discretization, LocalContribution, ScalarField,
    SparseSystem,
};
use crate::kinematics::{
    transformed_conductivity, transformed_permittivity, DeformationField, MaterialParameters,
    TransformState,
};
use crate::linalg::*;
use crate::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

/// The two complex periodic corrector fields, gauge-fixed by a pinned
/// vertex dof.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub chi: [ScalarField; 2],
}

/// Assembled (unpinned) periodic cell system with its two right-hand
/// sides. The unpinned operator annihilates constants and the right-hand
/// sides are compatible, so pinning one dof selects the unique gauged
/// solution without perturbing any residual.
#[derive(Debug, Clone)]
pub struct CellSystem {
    pub n: usize,
    pub triplets: Vec<(usize, usize, Complex64)>,
    pub matrix: CscMatrix<Complex64>,
    pub rhs: [Vec<Complex64>; 2],
    pub pin_dof: usize,
}

pub fn assemble_cell_system(
    disc: &Discretization,
    q: &DeformationField,
    mat: &MaterialParameters,
) -> Result<CellSystem> {
    let sigma = mat.sigma();
    let surface_factor = Complex64::new(0.0, 1.0) / mat.omega; // -1/(i w)
    let sys: SparseSystem<Complex64> = assemble(
        disc,
        &disc.periodic,
        2,
        |ci| {
            let mut local = LocalContribution::zero(2);
            for qp in &disc.cell_data[ci] {
                let g = crate::fem::grad_from_nodal(&qp.grads, &disc.mesh.cells[ci], &q.nodal);
                let state = TransformState::from_grad(&g);
                // J <= 0 is representable; the evaluator rejects it before
                // solving, and assembly must stay total for diagnostics
                let eps_hat = if state.j > 0.0 {
                    transformed_permittivity(&mat.eps, &state).expect("positive determinant")
                } else {
                    [[Complex64::new(0.0, 0.0); 2]; 2]
                };
                for b in 0..4 {
                    let eg = cmat_vec(&eps_hat, &real_to_complex2(&qp.grads[b]));
                    for a in 0..4 {
                        local.mat[a][b] +=
                            (eg[0] * qp.grads[a][0] + eg[1] * qp.grads[a][1]) * qp.weight;
                    }
                }
                for i in 0..2 {
                    let e = [(i == 0) as usize as f64, (i == 1) as usize as f64];
                    let fte = matt_vec(&state.f, &e);
                    let ef = cmat_vec(&eps_hat, &real_to_complex2(&fte));
                    for a in 0..4 {
                        local.rhs[i][a] -=
                            (ef[0] * qp.grads[a][0] + ef[1] * qp.grads[a][1]) * qp.weight;
                    }
                }
            }
            local
        },
        |fi| {
            let face = &disc.faces[fi];
            let tau = face.frame.tangent;
            let mut local = LocalContribution::zero(2);
            for (k, fqp) in face.qp.iter().enumerate() {
                let g = crate::fem::grad_from_nodal(
                    &fqp.grads,
                    &disc.mesh.cells[face.frame.inner.0],
                    &q.nodal,
                );
                let state = TransformState::from_grad(&g);
                let sigma_hat = if state.j > 0.0 {
                    transformed_conductivity(sigma, &state, &tau)
                        .unwrap_or(Complex64::new(0.0, 0.0))
                } else {
                    Complex64::new(0.0, 0.0)
                };
                let coeff = surface_factor * sigma_hat * face.frame.weights[k];
                let tb: [f64; 4] = std::array::from_fn(|a| dot2(&fqp.grads[a], &tau));
                for a in 0..4 {
                    for b in 0..4 {
                        local.mat[a][b] += coeff * tb[b] * tb[a];
                    }
                }
                let ft = mat_vec(&state.f, &tau);
                for i in 0..2 {
                    // tau . (F^T e_i) = (F tau)_i
                    for a in 0..4 {
                        local.rhs[i][a] -= coeff * ft[i] * tb[a];
                    }
                }
            }
            local
        },
    )?;
    let pin_dof = disc
        .periodic
        .dof(0)
        .ok_or_else(|| Error::Contract("vertex 0 has no periodic dof".into()))?;
    let matrix = sys.csc();
    let mut rhs_iter = sys.rhs.into_iter();
    let rhs = [rhs_iter.next().unwrap(), rhs_iter.next().unwrap()];
    Ok(CellSystem {
        n: sys.n,
        triplets: sys.triplets,
        matrix,
        rhs,
        pin_dof,
    })
}

/// Factorization of the pinned cell operator, reused for both correctors
/// and for the adjoint solves.
pub struct CellSolver {
    pub system: CellSystem,
    lu: faer::sparse::linalg::solvers::Lu<usize, Complex64>,
}

impl CellSolver {
    pub fn new(system: CellSystem) -> Result<Self> {
        let p = system.pin_dof;
        let mut pinned: Vec<Triplet<usize, usize, Complex64>> = system
            .triplets
            .iter()
            .filter(|&&(r, c, _)| r != p && c != p)
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        pinned.push(Triplet::new(p, p, Complex64::new(1.0, 0.0)));
        let mat =
            SparseColMat::<usize, Complex64>::try_new_from_triplets(system.n, system.n, &pinned)
                .map_err(|e| Error::Solver(format!("cell matrix build failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Solver(format!("cell matrix LU failed: {e:?}")))?;
        Ok(CellSolver { system, lu })
    }

    /// Solves the gauged system for a compatible right-hand side (one
    /// that annihilates constants) and verifies the residual of the full
    /// unpinned system.
    pub fn solve_gauged(&self, rhs: &[Complex64]) -> Result<ScalarField> {
        let n = self.system.n;
        let p = self.system.pin_dof;
        let b = faer::Mat::<Complex64>::from_fn(n, 1, |i, _| {
            if i == p {
                Complex64::new(0.0, 0.0)
            } else {
                rhs[i]
            }
        });
        let x = self.lu.solve(&b);
        let sol: ScalarField = (0..n).map(|i| x[(i, 0)]).collect();
        let ax = self.system.matrix.matvec(&sol);
        let mut rnorm = 0.0f64;
        let mut bnorm = 0.0f64;
        for i in 0..n {
            rnorm += (ax[i] - rhs[i]).norm_sqr();
            bnorm += rhs[i].norm_sqr();
        }
        let rel = rnorm.sqrt() / bnorm.sqrt().max(1e-300);
        if bnorm.sqrt() > 1e-13 && !(rel <= 1e-10) {
            return Err(Error::Solver(format!(
                "cell solve residual {rel:.3e} exceeds 1e-10 \
                 (incompatible right-hand side or near-singular operator)"
            )));
        }
        Ok(sol)
    }

    pub fn solve_correctors(&self) -> Result<CorrectorField> {
        let chi0 = self.solve_gauged(&self.system.rhs[0])?;
        let chi1 = self.solve_gauged(&self.system.rhs[1])?;
        Ok(CorrectorField { chi: [chi0, chi1] })
    }
}

/// Homogenized 2x2 complex permittivity tensor.
#[derive(Debug, Clone, Copy)]
pub struct EffectiveTensor {
    pub matrix: CMat2,
}

/// Frobenius norm over the independent components of a symmetric 2x2
/// tensor: diagonal entries once, the off-diagonal pair averaged.
pub fn frobenius_sym(m: &CMat2) -> f64 {
    (m[0][0].norm_sqr() + m[1][1].norm_sqr() + 0.5 * (m[0][1].norm_sqr() + m[1][0].norm_sqr()))
        .sqrt()
}

impl EffectiveTensor {
    pub fn difference(&self, target: &CMat2) -> CMat2 {
        let mut d = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                d[i][j] = self.matrix[i][j] - target[i][j];
            }
        }
        d
    }

    /// `1/2 ||eff - target||^2`.
    pub fn misfit(&self, target: &CMat2) -> f64 {
        let d = self.difference(target);
        0.5 * frobenius_sym(&d).powi(2)
    }

    /// Relative deviation `||eff - target|| / ||target||`.
    pub fn deviation(&self, target: &CMat2) -> f64 {
        frobenius_sym(&self.difference(target)) / frobenius_sym(target)
    }

    pub fn deviation_percent(&self, target: &CMat2) -> f64 {
        100.0 * self.deviation(target)
    }
}

/// Averages the corrected fields into the effective tensor.
pub fn effective_tensor(
    disc: &Discretization,
    q: &DeformationField,
    mat: &MaterialParameters,
    correctors: &CorrectorField,
) -> Result<EffectiveTensor> {
    let sigma = mat.sigma();
    let surface_factor = Complex64::new(0.0, 1.0) / mat.omega;
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        for qp in &disc.cell_data[ci] {
            let g = crate::fem::grad_from_nodal(&qp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&g);
            let eps_hat = transformed_permittivity(&mat.eps, &state)?;
            let w = corrected_fields(&state, disc, cell, correctors, &qp.grads);
            for i in 0..2 {
                let wi_conj = conj2(&w[i]);
                for j in 0..2 {
                    let ew = cmat_vec(&eps_hat, &w[j]);
                    out[i][j] += cdot2(&ew, &wi_conj) * qp.weight;
                }
            }
        }
    }
    for face in &disc.faces {
        let tau = face.frame.tangent;
        let cell = &disc.mesh.cells[face.frame.inner.0];
        for (k, fqp) in face.qp.iter().enumerate() {
            let g = crate::fem::grad_from_nodal(&fqp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&g);
            let sigma_hat = transformed_conductivity(sigma, &state, &tau)?;
            let coeff = surface_factor * sigma_hat * face.frame.weights[k];
            let t = tangential_fields(&state, disc, cell, correctors, &fqp.grads, &tau);
            for i in 0..2 {
                for j in 0..2 {
                    out[i][j] += coeff * t[j] * t[i].conj();
                }
            }
        }
    }
    Ok(EffectiveTensor { matrix: out })
}

/// `w_i = F^T e_i + grad chi_i` at a volume point.
pub(crate) fn corrected_fields(
    state: &TransformState,
    disc: &Discretization,
    cell: &[usize; 4],
    correctors: &CorrectorField,
    grads: &[[f64; 2]; 4],
) -> [[Complex64; 2]; 2] {
    let mut w = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        let e = [(i == 0) as usize as f64, (i == 1) as usize as f64];
        let fte = matt_vec(&state.f, &e);
        let gc = complex_grad(grads, cell, &disc.periodic, &correctors.chi[i]);
        w[i] = [gc[0] + fte[0], gc[1] + fte[1]];
    }
    w
}

/// `t_i = tau.(F^T e_i) + tau.grad chi_i` at a face point.
pub(crate) fn tangential_fields(
    state: &TransformState,
    disc: &Discretization,
    cell: &[usize; 4],
    correctors: &CorrectorField,
    grads: &[[f64; 2]; 4],
    tau: &[f64; 2],
) -> [Complex64; 2] {
    let ft = mat_vec(&state.f, tau);
    let mut t = [Complex64::new(0.0, 0.0); 2];
    for i in 0..2 {
        let gc = complex_grad(grads, cell, &disc.periodic, &correctors.chi[i]);
        t[i] = gc[0] * tau[0] + gc[1] * tau[1] + ft[i];
    }
    t
}

/// Both sides of the corrector energy estimate: the left side
/// `|grad chi|^2 + (1/w)|tau.grad chi|^2_S` and the right side
/// `|eps_hat|^2_inf |F^T|^2_2 + (1/w)|sigma_hat|^2_inf |F^T|^2_2,S`
/// without the constant.
pub fn apriori_sides(
    disc: &Discretization,
    q: &DeformationField,
    mat: &MaterialParameters,
    correctors: &CorrectorField,
) -> Result<(f64, f64)> {
    let sigma = mat.sigma();
    let mut lhs = 0.0;
    let mut f_l2_vol = 0.0;
    let mut f_l2_surf = 0.0;
    let mut eps_inf: f64 = 0.0;
    let mut sigma_inf: f64 = 0.0;
    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        for qp in &disc.cell_data[ci] {
            let g = crate::fem::grad_from_nodal(&qp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&g);
            let eps_hat = transformed_permittivity(&mat.eps, &state)?;
            let mut frob = 0.0;
            for row in &eps_hat {
                for v in row {
                    frob += v.norm_sqr();
                }
            }
            eps_inf = eps_inf.max(frob.sqrt());
            let mut ft2 = 0.0;
            for row in &state.f {
                for v in row {
                    ft2 += v * v;
                }
            }
            f_l2_vol += qp.weight * ft2;
            for chi in &correctors.chi {
                let gc = complex_grad(&qp.grads, cell, &disc.periodic, chi);
                lhs += qp.weight * (gc[0].norm_sqr() + gc[1].norm_sqr());
            }
        }
    }
    for face in &disc.faces {
        let tau = face.frame.tangent;
        let cell = &disc.mesh.cells[face.frame.inner.0];
        for (k, fqp) in face.qp.iter().enumerate() {
            let g = crate::fem::grad_from_nodal(&fqp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&g);
            let sigma_hat = transformed_conductivity(sigma, &state, &tau)?;
            sigma_inf = sigma_inf.max(sigma_hat.norm());
            let w = face.frame.weights[k];
            let mut ft2 = 0.0;
            for row in &state.f {
                for v in row {
                    ft2 += v * v;
                }
            }
            f_l2_surf += w * ft2;
            for chi in &correctors.chi {
                let gc = complex_grad(&fqp.grads, cell, &disc.periodic, chi);
                let tg = gc[0] * tau[0] + gc[1] * tau[1];
                lhs += w * tg.norm_sqr() / mat.omega;
            }
        }
    }
    let rhs = eps_inf.powi(2) * f_l2_vol + sigma_inf.powi(2) * f_l2_surf / mat.omega;
    Ok((lhs, rhs))
}

/// Weighted difference norm between two corrector solutions, the left
/// side of the Lipschitz estimate.
pub fn corrector_difference_norm(
    disc: &Discretization,
    mat: &MaterialParameters,
    a: &CorrectorField,
    b: &CorrectorField,
) -> f64 {
    let mut total = 0.0;
    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        for qp in &disc.cell_data[ci] {
            for i in 0..2 {
                let ga = complex_grad(&qp.grads, cell, &disc.periodic, &a.chi[i]);
                let gb = complex_grad(&qp.grads, cell, &disc.periodic, &b.chi[i]);
                total +=
                    qp.weight * ((ga[0] - gb[0]).norm_sqr() + (ga[1] - gb[1]).norm_sqr());
            }
        }
    }
    for face in &disc.faces {
        let tau = face.frame.tangent;
        let cell = &disc.mesh.cells[face.frame.inner.0];
        for (k, fqp) in face.qp.iter().enumerate() {
            for i in 0..2 {
                let ga = complex_grad(&fqp.grads, cell, &disc.periodic, &a.chi[i]);
                let gb = complex_grad(&fqp.grads, cell, &disc.periodic, &b.chi[i]);
                let ta = (ga[0] - gb[0]) * tau[0] + (ga[1] - gb[1]) * tau[1];
                total += face.frame.weights[k] * ta.norm_sqr() / mat.omega;
            }
        }
    }
    total.sqrt()
}

/// Solves the reference or deformed cell problem end to end.
pub fn solve_cell_problem(
    disc: &Discretization,
    q: &DeformationField,
    mat: &MaterialParameters,
) -> Result<(CorrectorField, EffectiveTensor)> {
    ensure_admissible(disc, q)?;
    let system = assemble_cell_system(disc, q, mat)?;
    let solver = CellSolver::new(system)?;
    let correctors = solver.solve_correctors()?;
    let tensor = effective_tensor(disc, q, mat, &correctors)?;
    Ok((correctors, tensor))
}

/// Minimum transformation determinant over all volume quadrature points.
pub fn min_determinant(disc: &Discretization, q: &DeformationField) -> f64 {
    let mut min_j = f64::INFINITY;
    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        for qp in &disc.cell_data[ci] {
            let g = crate::fem::grad_from_nodal(&qp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&g);
            min_j = min_j.min(state.j);
        }
    }
    min_j
}

pub fn ensure_admissible(disc: &Discretization, q: &DeformationField) -> Result<()> {
    let min_j = min_determinant(disc, q);
    if min_j <= 0.0 {
        return Err(Error::DegenerateDeformation(format!(
            "minimum transformation determinant {min_j:.3e} is not positive"
        )));
    }
    Ok(())
}
