//! Regularized cost functional, adjoint solve, shape derivative and the
//! `H^1` Riesz gradient of the reduced cost.
//!
//! The discrete gradient is the exact derivative of the discrete cost:
//! every term is differentiated at the same quadrature points that the
//! cost, state and adjoint use, so central finite differences of the
//! reduced cost converge to the assembled directional derivative.
//!
//! Complex states are treated as pairs of real fields. For the complex
//! symmetric operator `A` this collapses the adjoint solve to one more
//! backsolve with the factorization of `A`: the misfit gradient with
//! respect to the corrector dofs assembles into complex vectors
//! `m_k = sum_i w_ik conj(d_ik) (A conj(chi_i) - b_i)` and the stored
//! adjoint field is `zeta_k = A^{-1} m_k` (the conjugate of the
//! multiplier), which is exactly how it enters the shape derivative.

use crate::cellproblem::{
    assemble_cell_system, corrected_fields, effective_tensor, min_determinant, tangential_fields,
    CellSolver, CorrectorField, EffectiveTensor,
};
use crate::fem::{grad_from_nodal, Discretization, RieszSolver, ScalarField, VectorField};
use crate::kinematics::{
    d_transformed_conductivity, d_transformed_permittivity, transformed_conductivity,
    transformed_permittivity, DeformationField, MaterialParameters, TransformState,
};
use crate::linalg::*;
use crate::{Error, Result};

/// Target tensor and regularization weights of the cost functional.
#[derive(Debug, Clone, Copy)]
pub struct CostConfig {
    pub target: CMat2,
    /// Tikhonov weight, must be positive (it also scales the initial
    /// inverse Hessian).
    pub alpha: f64,
    /// Extra Tikhonov weight on interface-adjacent cells.
    pub alpha_sigma: f64,
    /// Barrier penalty weight.
    pub beta: f64,
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.alpha_sigma < 0.0 || self.beta < 0.0 {
            return Err(Error::Config("alpha_sigma and beta must be >= 0".into()));
        }
        if self
            .target
            .iter()
            .flatten()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(Error::Config("target tensor has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Cost value split into its three terms.
#[derive(Debug, Clone, Copy)]
pub struct CostBreakdown {
    pub misfit: f64,
    pub tikhonov: f64,
    pub penalty: f64,
    pub total: f64,
    pub deviation_percent: f64,
    pub min_j: f64,
}

/// Barrier density in the transformation determinant: quadratic above 1,
/// blowing up as `J -> 0+`, infinite sentinel at `J <= 0`.
pub fn penalty_density(j: f64) -> f64 {
    if j >= 1.0 {
        0.5 * (j - 1.0) * (j - 1.0)
    } else if j > 0.0 {
        0.5 * (j - 1.0) * (j - 1.0) / (j.abs() + j)
    } else {
        f64::INFINITY
    }
}

/// Derivative of the barrier density (continuous at `J = 1`).
pub fn penalty_density_derivative(j: f64) -> f64 {
    if j >= 1.0 {
        j - 1.0
    } else if j > 0.0 {
        (j * j - 1.0) / (4.0 * j * j)
    } else {
        f64::NEG_INFINITY
    }
}

/// Tikhonov term `alpha/2 int w_h |grad q|^2` with the interface weight.
fn tikhonov_term(disc: &Discretization, q: &DeformationField, cost: &CostConfig) -> f64 {
    let mut acc = 0.0;
    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        let w_h = disc.interface_weight(ci, cost.alpha_sigma);
        for qp in &disc.cell_data[ci] {
            let g = grad_from_nodal(&qp.grads, cell, &q.nodal);
            acc += qp.weight * w_h * frob2(&g, &g);
        }
    }
    0.5 * cost.alpha * acc
}

/// Penalty term `beta int P(J)` and the minimum determinant over the
/// volume quadrature points.
fn penalty_term(disc: &Discretization, q: &DeformationField, beta: f64) -> (f64, f64) {
    let mut acc = 0.0;
    let mut min_j = f64::INFINITY;
    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        for qp in &disc.cell_data[ci] {
            let g = grad_from_nodal(&qp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&g);
            min_j = min_j.min(state.j);
            acc += qp.weight * penalty_density(state.j);
        }
    }
    (beta * acc, min_j)
}

/// Evaluates the full cost for a state that solves the cell problem.
pub fn evaluate_cost(
    disc: &Discretization,
    q: &DeformationField,
    cost: &CostConfig,
    tensor: &EffectiveTensor,
) -> CostBreakdown {
    let misfit = tensor.misfit(&cost.target);
    let tikhonov = tikhonov_term(disc, q, cost);
    let (penalty, min_j) = penalty_term(disc, q, cost.beta);
    CostBreakdown {
        misfit,
        tikhonov,
        penalty,
        total: misfit + tikhonov + penalty,
        deviation_percent: tensor.deviation_percent(&cost.target),
        min_j,
    }
}

/// Breakdown for a rejected (tangled) trial point: infinite barrier.
pub fn degenerate_breakdown(
    disc: &Discretization,
    q: &DeformationField,
    cost: &CostConfig,
) -> CostBreakdown {
    let tikhonov = tikhonov_term(disc, q, cost);
    let (_, min_j) = penalty_term(disc, q, cost.beta);
    CostBreakdown {
        misfit: 0.0,
        tikhonov,
        penalty: f64::INFINITY,
        total: f64::INFINITY,
        deviation_percent: f64::NAN,
        min_j,
    }
}

/// Misfit weights of the symmetric-component Frobenius norm.
fn misfit_weight(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.5
    }
}

/// Adjoint fields stored as `zeta_k = A^{-1} m_k`, the conjugates of the
/// Lagrange multipliers.
#[derive(Debug, Clone)]
pub struct AdjointField {
    pub zeta: [ScalarField; 2],
}

/// Assembles the misfit gradient with respect to each corrector and
/// backsolves with the state factorization.
pub fn solve_adjoint(
    solver: &CellSolver,
    correctors: &CorrectorField,
    tensor: &EffectiveTensor,
    cost: &CostConfig,
) -> Result<AdjointField> {
    let rhs = adjoint_rhs(solver, correctors, tensor, cost);
    let zeta0 = solver.solve_gauged(&rhs[0])?;
    let zeta1 = solver.solve_gauged(&rhs[1])?;
    Ok(AdjointField {
        zeta: [zeta0, zeta1],
    })
}

/// `m_k = sum_i w_ik conj(d_ik) g_i` with `g_i = A conj(chi_i) - b_i`.
pub fn adjoint_rhs(
    solver: &CellSolver,
    correctors: &CorrectorField,
    tensor: &EffectiveTensor,
    cost: &CostConfig,
) -> [Vec<Complex64>; 2] {
    let system = &solver.system;
    let n = system.n;
    let d = tensor.difference(&cost.target);
    let mut g = Vec::with_capacity(2);
    for i in 0..2 {
        let conj_chi: Vec<Complex64> = correctors.chi[i].iter().map(|c| c.conj()).collect();
        let mut gi = system.matrix.matvec(&conj_chi);
        for (a, b) in gi.iter_mut().zip(system.rhs[i].iter()) {
            *a -= b;
        }
        g.push(gi);
    }
    let mut rhs = [
        vec![Complex64::new(0.0, 0.0); n],
        vec![Complex64::new(0.0, 0.0); n],
    ];
    for k in 0..2 {
        for i in 0..2 {
            let coeff = d[i][k].conj() * misfit_weight(i, k);
            for (r, gi) in rhs[k].iter_mut().zip(g[i].iter()) {
                *r += coeff * gi;
            }
        }
    }
    rhs
}

/// Assembles the directional derivative of the reduced cost as a dual
/// vector over the control dofs (component blocks).
pub fn shape_derivative(
    disc: &Discretization,
    q: &DeformationField,
    mat: &MaterialParameters,
    cost: &CostConfig,
    correctors: &CorrectorField,
    adjoint: &AdjointField,
    tensor: &EffectiveTensor,
) -> Result<Vec<f64>> {
    let nctl = disc.control.ndofs;
    let mut dual = vec![0.0; 2 * nctl];
    let d = tensor.difference(&cost.target);
    let mut dwgt = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            dwgt[i][j] = d[i][j].conj() * misfit_weight(i, j);
        }
    }
    let sigma = mat.sigma();
    let surface_factor = Complex64::new(0.0, 1.0) / mat.omega;

    for (ci, cell) in disc.mesh.cells.iter().enumerate() {
        let w_h = disc.interface_weight(ci, cost.alpha_sigma);
        for qp in &disc.cell_data[ci] {
            let gq = grad_from_nodal(&qp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&gq);
            if state.j <= 0.0 {
                return Err(Error::DegenerateDeformation(
                    "shape derivative at a tangled configuration".into(),
                ));
            }
            let eps_hat = transformed_permittivity(&mat.eps, &state)?;
            let w = corrected_fields(&state, disc, cell, correctors, &qp.grads);
            let w_conj = [conj2(&w[0]), conj2(&w[1])];
            let eps_w = [cmat_vec(&eps_hat, &w[0]), cmat_vec(&eps_hat, &w[1])];
            let zeta_grad = [
                crate::fem::complex_grad(&qp.grads, cell, &disc.periodic, &adjoint.zeta[0]),
                crate::fem::complex_grad(&qp.grads, cell, &disc.periodic, &adjoint.zeta[1]),
            ];
            let pprime = penalty_density_derivative(state.j);
            for a in 0..4 {
                let Some(dof) = disc.control.dof(cell[a]) else {
                    continue;
                };
                for m in 0..2 {
                    // direction gradient G = e_m (grad phi_a)^T
                    let mut g_dir = [[0.0; 2]; 2];
                    g_dir[m] = qp.grads[a];
                    let dir = state.directional(&g_dir);
                    let d_eps = d_transformed_permittivity(&mat.eps, &state, &dir);
                    // dw_i = G^T e_i is nonzero only for i == m
                    let dw_m = real_to_complex2(&qp.grads[a]);

                    let mut acc = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut dv = cdot2(&cmat_vec(&d_eps, &w[j]), &w_conj[i]);
                            if j == m {
                                dv += cdot2(&cmat_vec(&eps_hat, &dw_m), &w_conj[i]);
                            }
                            if i == m {
                                // conj(dw_i) = dw_i, real direction
                                dv += cdot2(&eps_w[j], &dw_m);
                            }
                            acc += (dwgt[i][j] * dv).re;
                        }
                    }
                    for k in 0..2 {
                        let mut dv = cdot2(&cmat_vec(&d_eps, &w[k]), &zeta_grad[k]);
                        if k == m {
                            dv += cdot2(&cmat_vec(&eps_hat, &dw_m), &zeta_grad[k]);
                        }
                        acc -= dv.re;
                    }
                    acc += cost.alpha * w_h * frob2(&gq, &g_dir);
                    acc += cost.beta * pprime * dir.d_j;
                    dual[m * nctl + dof] += qp.weight * acc;
                }
            }
        }
    }

    for face in &disc.faces {
        let tau = face.frame.tangent;
        let cell = &disc.mesh.cells[face.frame.inner.0];
        for (kqp, fqp) in face.qp.iter().enumerate() {
            let gq = grad_from_nodal(&fqp.grads, cell, &q.nodal);
            let state = TransformState::from_grad(&gq);
            let sigma_hat = transformed_conductivity(sigma, &state, &tau)?;
            let t = tangential_fields(&state, disc, cell, correctors, &fqp.grads, &tau);
            let zeta_t: [Complex64; 2] = std::array::from_fn(|k| {
                let gz =
                    crate::fem::complex_grad(&fqp.grads, cell, &disc.periodic, &adjoint.zeta[k]);
                gz[0] * tau[0] + gz[1] * tau[1]
            });
            let weight = face.frame.weights[kqp];
            for a in 0..4 {
                let Some(dof) = disc.control.dof(cell[a]) else {
                    continue;
                };
                let tb_a = dot2(&fqp.grads[a], &tau);
                for m in 0..2 {
                    let mut g_dir = [[0.0; 2]; 2];
                    g_dir[m] = fqp.grads[a];
                    let dir = state.directional(&g_dir);
                    let d_sigma = d_transformed_conductivity(sigma, &state, &dir, &tau);
                    // dt_i = tau.(G^T e_i) is nonzero only for i == m
                    let dt_m = tb_a;

                    let mut acc = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut dv = d_sigma * t[j] * t[i].conj();
                            if j == m {
                                dv += sigma_hat * dt_m * t[i].conj();
                            }
                            if i == m {
                                dv += sigma_hat * t[j] * dt_m;
                            }
                            acc += (dwgt[i][j] * surface_factor * dv).re;
                        }
                    }
                    for k in 0..2 {
                        let mut dv = d_sigma * t[k];
                        if k == m {
                            dv += sigma_hat * dt_m;
                        }
                        acc -= (surface_factor * dv * zeta_t[k]).re;
                    }
                    dual[m * nctl + dof] += weight * acc;
                }
            }
        }
    }
    Ok(dual)
}

/// Riesz lift of the derivative functional and its `H^1_0` seminorm.
pub fn riesz_gradient(riesz: &RieszSolver, dual: &[f64]) -> Result<(VectorField, f64)> {
    let gradient = riesz.solve(dual)?;
    let norm2: f64 = gradient.iter().zip(dual.iter()).map(|(a, b)| a * b).sum();
    Ok((gradient, norm2.max(0.0).sqrt()))
}

/// Everything the optimizer needs from one admissible configuration.
pub struct GradientData {
    pub breakdown: CostBreakdown,
    pub tensor: EffectiveTensor,
    /// Riesz gradient in control dofs.
    pub gradient: VectorField,
    pub seminorm: f64,
}

/// One problem instance: discretization, material, cost and the control
/// Riesz solver. Evaluates the reduced cost and its gradient at control
/// vectors (component-block layout).
pub struct GradientPipeline<'a> {
    pub disc: &'a Discretization,
    pub mat: MaterialParameters,
    pub cost: CostConfig,
    pub riesz: &'a RieszSolver,
}

impl<'a> GradientPipeline<'a> {
    pub fn new(
        disc: &'a Discretization,
        mat: MaterialParameters,
        cost: CostConfig,
        riesz: &'a RieszSolver,
    ) -> Result<Self> {
        mat.validate()?;
        cost.validate()?;
        Ok(GradientPipeline {
            disc,
            mat,
            cost,
            riesz,
        })
    }

    pub fn deformation(&self, dofs: &[f64]) -> DeformationField {
        self.disc.control.deformation_from_blocks(dofs)
    }

    /// Reduced cost at a control vector; tangled configurations get the
    /// infinite barrier instead of an error.
    pub fn cost(&self, dofs: &[f64]) -> Result<CostBreakdown> {
        let q = self.deformation(dofs);
        if min_determinant(self.disc, &q) <= 0.0 {
            return Ok(degenerate_breakdown(self.disc, &q, &self.cost));
        }
        let system = assemble_cell_system(self.disc, &q, &self.mat)?;
        let solver = CellSolver::new(system)?;
        let correctors = solver.solve_correctors()?;
        let tensor = effective_tensor(self.disc, &q, &self.mat, &correctors)?;
        Ok(evaluate_cost(self.disc, &q, &self.cost, &tensor))
    }

    /// Full pipeline: state, adjoint, shape derivative, Riesz gradient.
    pub fn cost_and_gradient(&self, dofs: &[f64]) -> Result<GradientData> {
        let q = self.deformation(dofs);
        if min_determinant(self.disc, &q) <= 0.0 {
            return Err(Error::DegenerateDeformation(
                "gradient requested at a tangled configuration".into(),
            ));
        }
        let system = assemble_cell_system(self.disc, &q, &self.mat)?;
        let solver = CellSolver::new(system)?;
        let correctors = solver.solve_correctors()?;
        let tensor = effective_tensor(self.disc, &q, &self.mat, &correctors)?;
        let breakdown = evaluate_cost(self.disc, &q, &self.cost, &tensor);
        let adjoint = solve_adjoint(&solver, &correctors, &tensor, &self.cost)?;
        let dual = shape_derivative(
            self.disc,
            &q,
            &self.mat,
            &self.cost,
            &correctors,
            &adjoint,
            &tensor,
        )?;
        let (gradient, seminorm) = riesz_gradient(self.riesz, &dual)?;
        Ok(GradientData {
            breakdown,
            tensor,
            gradient,
            seminorm,
        })
    }

    /// Dual derivative vector (before the Riesz lift), for consistency
    /// checks: the directional derivative along `dq` is `dual . dq`.
    pub fn derivative_dual(&self, dofs: &[f64]) -> Result<Vec<f64>> {
        let q = self.deformation(dofs);
        let system = assemble_cell_system(self.disc, &q, &self.mat)?;
        let solver = CellSolver::new(system)?;
        let correctors = solver.solve_correctors()?;
        let tensor = effective_tensor(self.disc, &q, &self.mat, &correctors)?;
        let adjoint = solve_adjoint(&solver, &correctors, &tensor, &self.cost)?;
        shape_derivative(
            self.disc,
            &q,
            &self.mat,
            &self.cost,
            &correctors,
            &adjoint,
            &tensor,
        )
    }
}

/// One direction of a finite-difference consistency check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FdCheck {
    pub direction: usize,
    pub analytic: f64,
    pub best_fd: f64,
    pub best_rel_err: f64,
    pub best_step: f64,
    /// (step, relative error) sweep, the V-curve.
    pub sweep: Vec<(f64, f64)>,
}

/// Central finite differences of the reduced cost along `dq` over a step
/// sweep, against the assembled directional derivative.
pub fn fd_directional_check(
    pipeline: &GradientPipeline,
    dofs: &[f64],
    direction: &[f64],
    index: usize,
) -> Result<FdCheck> {
    let dual = pipeline.derivative_dual(dofs)?;
    let analytic: f64 = dual.iter().zip(direction.iter()).map(|(a, b)| a * b).sum();
    let mut sweep = Vec::new();
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for k in 2..=7 {
        let h = 10f64.powi(-k);
        let probe = |s: f64| -> Result<f64> {
            let shifted: Vec<f64> = dofs
                .iter()
                .zip(direction.iter())
                .map(|(q, d)| q + s * d)
                .collect();
            Ok(pipeline.cost(&shifted)?.total)
        };
        let fd = (probe(h)? - probe(-h)?) / (2.0 * h);
        let rel = (fd - analytic).abs() / analytic.abs().max(1e-14);
        sweep.push((h, rel));
        if rel < best.0 {
            best = (rel, h, fd);
        }
    }
    Ok(FdCheck {
        direction: index,
        analytic,
        best_fd: best.2,
        best_rel_err: best.0,
        best_step: best.1,
        sweep,
    })
}
