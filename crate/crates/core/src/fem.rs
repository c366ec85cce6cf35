//! Bilinear Q1 elements on quadrilaterals: quadrature, constrained dof
//! maps (periodic / zero boundary), sparse assembly and direct solves.
//!
//! Geometry factors (mapped shape gradients and weights) depend only on
//! the mesh and are cached once per mesh in [`Discretization`]; material
//! coefficients are evaluated per quadrature point by the callers.
//! Assembly iterates cells and faces in index order, so results are
//! deterministic.

use crate::geometry::{InterfaceFrame, Mesh, FACE_VERTS};
use crate::kinematics::DeformationField;
use crate::linalg::*;
use crate::{Error, Result};
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

/// Complex dof-indexed coefficient vector (state/adjoint fields).
pub type ScalarField = Vec<Complex64>;

/// Real dof-indexed coefficient vector over the control space, stored as
/// two component blocks `[x-dofs..., y-dofs...]`.
pub type VectorField = Vec<f64>;

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // 1/(2 sqrt(3))

/// 2x2 Gauss rule on the reference square [0,1]^2 (degree 3 exact).
pub const VOLUME_QP: [([f64; 2], f64); 4] = [
    ([0.5 - GAUSS_OFFSET, 0.5 - GAUSS_OFFSET], 0.25),
    ([0.5 + GAUSS_OFFSET, 0.5 - GAUSS_OFFSET], 0.25),
    ([0.5 + GAUSS_OFFSET, 0.5 + GAUSS_OFFSET], 0.25),
    ([0.5 - GAUSS_OFFSET, 0.5 + GAUSS_OFFSET], 0.25),
];

/// 2-point Gauss rule on the reference segment [0,1] (degree 3 exact).
pub const FACE_QP: [(f64, f64); 2] = [
    (0.5 - GAUSS_OFFSET, 0.5),
    (0.5 + GAUSS_OFFSET, 0.5),
];

pub fn shape_values(p: [f64; 2]) -> [f64; 4] {
    let (x, y) = (p[0], p[1]);
    [
        (1.0 - x) * (1.0 - y),
        x * (1.0 - y),
        x * y,
        (1.0 - x) * y,
    ]
}

pub fn shape_gradients(p: [f64; 2]) -> [[f64; 2]; 4] {
    let (x, y) = (p[0], p[1]);
    [
        [-(1.0 - y), -(1.0 - x)],
        [1.0 - y, -x],
        [y, x],
        [-y, 1.0 - x],
    ]
}

/// Mapped quadrature data of one volume quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct CellQp {
    /// Shape-function gradients in cell coordinates.
    pub grads: [[f64; 2]; 4],
    /// Quadrature weight including the geometric Jacobian.
    pub weight: f64,
    pub point: [f64; 2],
}

/// Mapped quadrature data of one interface-face quadrature point, taken
/// from the cell inside the circle.
#[derive(Debug, Clone, Copy)]
pub struct FaceQp {
    pub grads: [[f64; 2]; 4],
    pub point: [f64; 2],
}

/// One geometric interface face with its frame and quadrature data.
#[derive(Debug, Clone)]
pub struct InterfaceFaceData {
    pub frame: InterfaceFrame,
    pub qp: [FaceQp; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofMode {
    Periodic,
    ZeroBoundary,
}

/// Scalar dof map after constraint resolution. Periodic mode identifies
/// paired boundary vertices with one dof; zero-boundary mode removes all
/// boundary vertices.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub mode: DofMode,
    pub vertex_dof: Vec<Option<usize>>,
    pub ndofs: usize,
}

impl DofMap {
    pub fn periodic(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let mut master: Vec<usize> = (0..n).collect();
        for &(s, m) in &mesh.periodic_pairs {
            // union by pointing the slave chain at the master root
            let mut root = m;
            while master[root] != root {
                root = master[root];
            }
            let mut v = s;
            while master[v] != v {
                let next = master[v];
                master[v] = root;
                v = next;
            }
            master[v] = root;
        }
        let mut vertex_dof = vec![None; n];
        let mut ndofs = 0;
        for v in 0..n {
            let mut root = v;
            while master[root] != root {
                root = master[root];
            }
            if vertex_dof[root].is_none() {
                vertex_dof[root] = Some(ndofs);
                ndofs += 1;
            }
            vertex_dof[v] = vertex_dof[root];
        }
        DofMap {
            mode: DofMode::Periodic,
            vertex_dof,
            ndofs,
        }
    }

    pub fn zero_boundary(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let mut vertex_dof = vec![None; n];
        let mut ndofs = 0;
        for v in 0..n {
            if !mesh.is_boundary_vertex(v) {
                vertex_dof[v] = Some(ndofs);
                ndofs += 1;
            }
        }
        DofMap {
            mode: DofMode::ZeroBoundary,
            vertex_dof,
            ndofs,
        }
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.vertex_dof[vertex]
    }

    /// Expands a two-block control vector into a nodal deformation field
    /// (zero on eliminated boundary vertices).
    pub fn deformation_from_blocks(&self, dofs: &[f64]) -> DeformationField {
        assert_eq!(self.mode, DofMode::ZeroBoundary);
        assert_eq!(dofs.len(), 2 * self.ndofs);
        let mut nodal = vec![[0.0, 0.0]; self.vertex_dof.len()];
        for (v, d) in self.vertex_dof.iter().enumerate() {
            if let Some(d) = d {
                nodal[v] = [dofs[*d], dofs[self.ndofs + *d]];
            }
        }
        DeformationField { nodal }
    }

    pub fn blocks_from_deformation(&self, q: &DeformationField) -> Vec<f64> {
        assert_eq!(self.mode, DofMode::ZeroBoundary);
        let mut dofs = vec![0.0; 2 * self.ndofs];
        for (v, d) in self.vertex_dof.iter().enumerate() {
            if let Some(d) = d {
                dofs[*d] = q.nodal[v][0];
                dofs[self.ndofs + *d] = q.nodal[v][1];
            }
        }
        dofs
    }
}

/// Mesh plus cached quadrature geometry and the two dof maps used by the
/// cell problem (periodic state space, zero-boundary control space).
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub cell_data: Vec<[CellQp; 4]>,
    pub faces: Vec<InterfaceFaceData>,
    /// Cells owning at least one interface face (either side).
    pub interface_cell: Vec<bool>,
    pub diameters: Vec<f64>,
    pub periodic: DofMap,
    pub control: DofMap,
}

impl Discretization {
    pub fn new(mesh: Mesh) -> Result<Self> {
        mesh.validate()?;
        let mut cell_data = Vec::with_capacity(mesh.cell_count());
        for cell in &mesh.cells {
            let verts: [[f64; 2]; 4] = [
                mesh.vertices[cell[0]],
                mesh.vertices[cell[1]],
                mesh.vertices[cell[2]],
                mesh.vertices[cell[3]],
            ];
            let mut qps = [CellQp {
                grads: [[0.0; 2]; 4],
                weight: 0.0,
                point: [0.0; 2],
            }; 4];
            for (k, &(p, w)) in VOLUME_QP.iter().enumerate() {
                qps[k] = mapped_point(&verts, p, w);
            }
            cell_data.push(qps);
        }

        let mut faces = Vec::new();
        let mut interface_cell = vec![false; mesh.cell_count()];
        for frame in mesh.interface_frames() {
            interface_cell[frame.inner.0] = true;
            interface_cell[frame.outer.0] = true;
            let qp = [
                face_qp_data(&mesh, &frame, 0),
                face_qp_data(&mesh, &frame, 1),
            ];
            faces.push(InterfaceFaceData { frame, qp });
        }

        let diameters = (0..mesh.cell_count()).map(|c| mesh.cell_diameter(c)).collect();
        let periodic = DofMap::periodic(&mesh);
        let control = DofMap::zero_boundary(&mesh);
        Ok(Discretization {
            mesh,
            cell_data,
            faces,
            interface_cell,
            diameters,
            periodic,
            control,
        })
    }

    pub fn cell_qp(&self, cell: usize, qp: usize) -> &CellQp {
        &self.cell_data[cell][qp]
    }

    /// Gradient of the nodal deformation at a volume quadrature point,
    /// row convention `g[i][j] = d q_i / d y_j`.
    pub fn deformation_gradient(&self, q: &DeformationField, cell: usize, qp: usize) -> Mat2 {
        grad_from_nodal(&self.cell_data[cell][qp].grads, &self.mesh.cells[cell], &q.nodal)
    }

    /// Same at an interface-face quadrature point (inner-cell data).
    pub fn deformation_gradient_face(&self, q: &DeformationField, face: usize, qp: usize) -> Mat2 {
        let f = &self.faces[face];
        grad_from_nodal(&f.qp[qp].grads, &self.mesh.cells[f.frame.inner.0], &q.nodal)
    }

    /// Shape gradients of an arbitrary cell at a point of one of its
    /// faces, parameterized by the arc parameter `s` of `frame`. Used to
    /// check single-valuedness of tangential derivatives from both sides.
    pub fn face_grads_from_cell(
        &self,
        cell: usize,
        local_face: usize,
        frame: &InterfaceFrame,
        s: f64,
    ) -> [[f64; 2]; 4] {
        let verts = self.mesh.cells[cell];
        let (a0, _a1) = FACE_VERTS[local_face];
        // cell-local parameter along the face
        let t = if verts[a0] == frame.endpoints[0] { s } else { 1.0 - s };
        let xi = face_reference_point(local_face, t);
        let vcoords: [[f64; 2]; 4] = [
            self.mesh.vertices[verts[0]],
            self.mesh.vertices[verts[1]],
            self.mesh.vertices[verts[2]],
            self.mesh.vertices[verts[3]],
        ];
        mapped_point(&vcoords, xi, 0.0).grads
    }

    /// Tikhonov weight `w_h = 1 + alpha_sigma / diam(K)` on cells owning
    /// an interface face, 1 elsewhere.
    pub fn interface_weight(&self, cell: usize, alpha_sigma: f64) -> f64 {
        if self.interface_cell[cell] {
            1.0 + alpha_sigma / self.diameters[cell]
        } else {
            1.0
        }
    }
}

fn mapped_point(verts: &[[f64; 2]; 4], p: [f64; 2], w: f64) -> CellQp {
    let gref = shape_gradients(p);
    let phi = shape_values(p);
    let mut jac = [[0.0; 2]; 2];
    let mut point = [0.0; 2];
    for a in 0..4 {
        for i in 0..2 {
            point[i] += phi[a] * verts[a][i];
            for j in 0..2 {
                jac[i][j] += verts[a][i] * gref[a][j];
            }
        }
    }
    let det = det2(&jac);
    let inv = inv2(&jac);
    let mut grads = [[0.0; 2]; 4];
    for a in 0..4 {
        grads[a] = matt_vec(&inv, &gref[a]);
    }
    CellQp {
        grads,
        weight: w * det,
        point,
    }
}

fn face_reference_point(local_face: usize, t: f64) -> [f64; 2] {
    match local_face {
        0 => [t, 0.0],
        1 => [1.0, t],
        2 => [1.0 - t, 1.0],
        _ => [0.0, 1.0 - t],
    }
}

fn face_qp_data(mesh: &Mesh, frame: &InterfaceFrame, k: usize) -> FaceQp {
    let (cell, local_face) = frame.inner;
    let verts = mesh.cells[cell];
    let (a0, _) = FACE_VERTS[local_face];
    let s = FACE_QP[k].0;
    let t = if verts[a0] == frame.endpoints[0] { s } else { 1.0 - s };
    let xi = face_reference_point(local_face, t);
    let vcoords: [[f64; 2]; 4] = [
        mesh.vertices[verts[0]],
        mesh.vertices[verts[1]],
        mesh.vertices[verts[2]],
        mesh.vertices[verts[3]],
    ];
    let data = mapped_point(&vcoords, xi, 0.0);
    FaceQp {
        grads: data.grads,
        point: data.point,
    }
}

pub fn grad_from_nodal(grads: &[[f64; 2]; 4], verts: &[usize; 4], nodal: &[[f64; 2]]) -> Mat2 {
    let mut g = [[0.0; 2]; 2];
    for a in 0..4 {
        let q = nodal[verts[a]];
        for i in 0..2 {
            for j in 0..2 {
                g[i][j] += q[i] * grads[a][j];
            }
        }
    }
    g
}

/// Gradient of a complex dof-indexed field at a quadrature point.
pub fn complex_grad(
    grads: &[[f64; 2]; 4],
    verts: &[usize; 4],
    dofmap: &DofMap,
    field: &[Complex64],
) -> [Complex64; 2] {
    let mut g = [Complex64::new(0.0, 0.0); 2];
    for a in 0..4 {
        if let Some(d) = dofmap.dof(verts[a]) {
            for j in 0..2 {
                g[j] += field[d] * grads[a][j];
            }
        }
    }
    g
}

/// Compressed sparse column matrix used for residual checks and
/// matrix-vector products outside the factorization path.
#[derive(Debug, Clone)]
pub struct CscMatrix<T> {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T> CscMatrix<T>
where
    T: Copy + Default + std::ops::AddAssign + std::ops::Mul<Output = T>,
{
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&i| (triplets[i].1, triplets[i].0));
        let mut counts = vec![0usize; n];
        let mut row_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut vals: Vec<T> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &i in &order {
            let (r, c, v) = triplets[i];
            if last == Some((c, r)) {
                let k = vals.len() - 1;
                vals[k] += v;
            } else {
                row_idx.push(r);
                vals.push(v);
                counts[c] += 1;
                last = Some((c, r));
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for c in 0..n {
            col_ptr[c + 1] = col_ptr[c] + counts[c];
        }
        CscMatrix {
            n,
            col_ptr,
            row_idx,
            vals,
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::default(); self.n];
        for c in 0..self.n {
            let xc = x[c];
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.vals[k] * xc;
            }
        }
        y
    }
}

/// Square sparse system with one or more right-hand sides.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub n: usize,
    pub triplets: Vec<(usize, usize, T)>,
    pub rhs: Vec<Vec<T>>,
    pub symmetric: bool,
}

impl<T: Copy + Default + std::ops::AddAssign + std::ops::Mul<Output = T>> SparseSystem<T> {
    pub fn new(n: usize, n_rhs: usize, symmetric: bool) -> Self {
        SparseSystem {
            n,
            triplets: Vec::new(),
            rhs: vec![vec![T::default(); n]; n_rhs],
            symmetric,
        }
    }

    pub fn csc(&self) -> CscMatrix<T> {
        CscMatrix::from_triplets(self.n, &self.triplets)
    }
}

const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

macro_rules! impl_solve {
    ($t:ty, $abs:expr) => {
        impl SparseSystem<$t> {
            /// Direct sparse LU solve of all right-hand sides with a
            /// relative residual check.
            pub fn solve(&self) -> Result<Vec<Vec<$t>>> {
                let faer_triplets: Vec<Triplet<usize, usize, $t>> = self
                    .triplets
                    .iter()
                    .map(|&(r, c, v)| Triplet::new(r, c, v))
                    .collect();
                let mat = SparseColMat::<usize, $t>::try_new_from_triplets(
                    self.n,
                    self.n,
                    &faer_triplets,
                )
                .map_err(|e| Error::Solver(format!("sparse matrix build failed: {e:?}")))?;
                let lu = mat
                    .sp_lu()
                    .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
                let csc = self.csc();
                let mut out = Vec::with_capacity(self.rhs.len());
                for rhs in &self.rhs {
                    let b = faer::Mat::<$t>::from_fn(self.n, 1, |i, _| rhs[i]);
                    let x = lu.solve(&b);
                    let xe: Vec<$t> = (0..self.n).map(|i| x[(i, 0)]).collect();
                    let ax = csc.matvec(&xe);
                    let mut rnorm = 0.0f64;
                    let mut bnorm = 0.0f64;
                    for i in 0..self.n {
                        rnorm += $abs(ax[i] - rhs[i]).powi(2);
                        bnorm += $abs(rhs[i]).powi(2);
                    }
                    let rel = rnorm.sqrt() / bnorm.sqrt().max(1e-300);
                    if bnorm > 0.0 && !(rel <= SOLVE_RESIDUAL_TOL) {
                        return Err(Error::Solver(format!(
                            "solution residual {rel:.3e} exceeds {SOLVE_RESIDUAL_TOL:.1e} \
                             (system near-singular or ill-conditioned)"
                        )));
                    }
                    out.push(xe);
                }
                Ok(out)
            }
        }
    };
}

impl_solve!(f64, f64::abs);
impl_solve!(Complex64, Complex64::norm);

/// Local contribution of one cell or face: a 4x4 block on the cell
/// vertices plus one 4-entry block per right-hand side.
#[derive(Debug, Clone)]
pub struct LocalContribution<T> {
    pub mat: [[T; 4]; 4],
    pub rhs: Vec<[T; 4]>,
}

impl<T: Copy + Default> LocalContribution<T> {
    pub fn zero(n_rhs: usize) -> Self {
        LocalContribution {
            mat: [[T::default(); 4]; 4],
            rhs: vec![[T::default(); 4]; n_rhs],
        }
    }
}

/// Assembles cellwise and interface-facewise local contributions into a
/// constrained global system. Dirichlet constraints are applied by
/// eliminating rows and columns (homogeneous values), periodic
/// constraints by index identification in the dof map.
pub fn assemble<T: Copy + Default + std::ops::AddAssign + std::ops::Mul<Output = T>>(
    disc: &Discretization,
    dofmap: &DofMap,
    n_rhs: usize,
    mut cell_fn: impl FnMut(usize) -> LocalContribution<T>,
    mut face_fn: impl FnMut(usize) -> LocalContribution<T>,
) -> Result<SparseSystem<T>> {
    let mut sys = SparseSystem::new(dofmap.ndofs, n_rhs, true);
    sys.triplets.reserve(16 * disc.mesh.cell_count());
    let scatter = |verts: &[usize; 4], local: &LocalContribution<T>, sys: &mut SparseSystem<T>| -> Result<()> {
        if local.rhs.len() != n_rhs {
            return Err(Error::Contract(format!(
                "local contribution has {} rhs blocks, expected {n_rhs}",
                local.rhs.len()
            )));
        }
        for a in 0..4 {
            let Some(ga) = dofmap.dof(verts[a]) else { continue };
            for b in 0..4 {
                if let Some(gb) = dofmap.dof(verts[b]) {
                    sys.triplets.push((ga, gb, local.mat[a][b]));
                }
            }
            for (k, rhs) in local.rhs.iter().enumerate() {
                sys.rhs[k][ga] += rhs[a];
            }
        }
        Ok(())
    };
    for ci in 0..disc.mesh.cell_count() {
        let local = cell_fn(ci);
        scatter(&disc.mesh.cells[ci], &local, &mut sys)?;
    }
    for fi in 0..disc.faces.len() {
        let local = face_fn(fi);
        let cell = disc.faces[fi].frame.inner.0;
        scatter(&disc.mesh.cells[cell], &local, &mut sys)?;
    }
    Ok(sys)
}

/// Stiffness (Laplace) local kernel for the undeformed mesh.
pub fn local_laplace(disc: &Discretization, cell: usize) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for qp in &disc.cell_data[cell] {
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += qp.weight * dot2(&qp.grads[a], &qp.grads[b]);
            }
        }
    }
    m
}

pub fn local_mass(disc: &Discretization, cell: usize) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (k, &(p, _)) in VOLUME_QP.iter().enumerate() {
        let phi = shape_values(p);
        let w = disc.cell_data[cell][k].weight;
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += w * phi[a] * phi[b];
            }
        }
    }
    m
}

pub fn assemble_scalar_laplace(disc: &Discretization, dofmap: &DofMap) -> Result<SparseSystem<f64>> {
    assemble(
        disc,
        dofmap,
        0,
        |cell| LocalContribution {
            mat: local_laplace(disc, cell),
            rhs: vec![],
        },
        |_| LocalContribution::zero(0),
    )
}

/// Riesz representative solver on the control space: factorizes the
/// scalar zero-boundary Laplace once and solves componentwise.
pub struct RieszSolver {
    pub n: usize,
    stiffness: CscMatrix<f64>,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl RieszSolver {
    pub fn new(disc: &Discretization) -> Result<Self> {
        let sys = assemble_scalar_laplace(disc, &disc.control)?;
        let faer_triplets: Vec<Triplet<usize, usize, f64>> = sys
            .triplets
            .iter()
            .map(|&(r, c, v)| Triplet::new(r, c, v))
            .collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(sys.n, sys.n, &faer_triplets)
            .map_err(|e| Error::Solver(format!("control stiffness build failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Solver(format!("control stiffness LU failed: {e:?}")))?;
        Ok(RieszSolver {
            n: sys.n,
            stiffness: sys.csc(),
            lu,
        })
    }

    /// Solves `(grad dc, grad dq) = rhs[dq]` for all control test
    /// functions; `rhs` holds the dual vector in component blocks.
    pub fn solve(&self, rhs: &[f64]) -> Result<VectorField> {
        assert_eq!(rhs.len(), 2 * self.n);
        let mut out = vec![0.0; 2 * self.n];
        for comp in 0..2 {
            let block = &rhs[comp * self.n..(comp + 1) * self.n];
            let b = faer::Mat::<f64>::from_fn(self.n, 1, |i, _| block[i]);
            let x = self.lu.solve(&b);
            for i in 0..self.n {
                out[comp * self.n + i] = x[(i, 0)];
            }
            let ax = self.stiffness.matvec(&out[comp * self.n..(comp + 1) * self.n]);
            let mut rnorm = 0.0;
            let mut bnorm = 0.0;
            for i in 0..self.n {
                rnorm += (ax[i] - block[i]).powi(2);
                bnorm += block[i].powi(2);
            }
            let rel = rnorm.sqrt() / bnorm.sqrt();
            if bnorm > 0.0 && !(rel <= SOLVE_RESIDUAL_TOL) {
                return Err(Error::Solver(format!(
                    "Riesz solve residual {rel:.3e} too large"
                )));
            }
        }
        Ok(out)
    }

    /// `K v` componentwise; inner products are plain dots against this.
    pub fn map(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), 2 * self.n);
        let mut out = vec![0.0; 2 * self.n];
        for comp in 0..2 {
            let block = self.stiffness.matvec(&v[comp * self.n..(comp + 1) * self.n]);
            out[comp * self.n..(comp + 1) * self.n].copy_from_slice(&block);
        }
        out
    }

    /// `H^1_0` semi-inner product of two control vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let kb = self.map(b);
        a.iter().zip(kb.iter()).map(|(x, y)| x * y).sum()
    }

    pub fn seminorm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_reference_mesh;

    fn disc(level: usize) -> Discretization {
        Discretization::new(generate_reference_mesh(0.3, level).unwrap()).unwrap()
    }

    /// Plain Jacobi eigenvalue iteration for small symmetric matrices.
    fn sym_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-15 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).collect()
    }

    #[test]
    fn volume_rule_exact_for_bilinear() {
        // integrate x*y over the reference square
        let mut s = 0.0;
        for &(p, w) in &VOLUME_QP {
            s += w * p[0] * p[1];
        }
        assert!((s - 0.25).abs() < 1e-15);
        let wsum: f64 = VOLUME_QP.iter().map(|&(_, w)| w).sum();
        assert!((wsum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn face_rule_exact_for_cubics() {
        let mut s = 0.0;
        for &(p, w) in &FACE_QP {
            s += w * (p * p * p - 0.4 * p * p + p - 2.0);
        }
        let exact = 0.25 - 0.4 / 3.0 + 0.5 - 2.0;
        assert!((s - exact).abs() < 1e-15);
        let wsum: f64 = FACE_QP.iter().map(|&(_, w)| w).sum();
        assert!((wsum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadrature_weights_tile_unit_square() {
        for level in 0..4 {
            let d = disc(level);
            let total: f64 = d
                .cell_data
                .iter()
                .flat_map(|qps| qps.iter().map(|q| q.weight))
                .sum();
            assert!((total - 1.0).abs() < 1e-13, "level {level}: {total}");
        }
    }

    #[test]
    fn partition_of_unity() {
        let d = disc(2);
        for (ci, qps) in d.cell_data.iter().enumerate() {
            for (k, _) in qps.iter().enumerate() {
                let phi = shape_values(VOLUME_QP[k].0);
                let s: f64 = phi.iter().sum();
                assert!((s - 1.0).abs() < 1e-14, "cell {ci}");
                // gradients sum to zero
                let g = d.cell_data[ci][k].grads;
                for j in 0..2 {
                    let gs: f64 = (0..4).map(|a| g[a][j]).sum();
                    assert!(gs.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn periodic_dof_identification() {
        let d = disc(2);
        let map = &d.periodic;
        for &(s, m) in &d.mesh.periodic_pairs {
            assert_eq!(map.dof(s), map.dof(m));
        }
        // four corners collapse to one dof
        let corners: Vec<usize> = (0..d.mesh.vertex_count())
            .filter(|&v| {
                let p = d.mesh.vertices[v];
                (p[0] < 1e-12 || p[0] > 1.0 - 1e-12) && (p[1] < 1e-12 || p[1] > 1.0 - 1e-12)
            })
            .collect();
        assert_eq!(corners.len(), 4);
        let dofs: std::collections::HashSet<_> = corners.iter().map(|&v| map.dof(v)).collect();
        assert_eq!(dofs.len(), 1);
    }

    #[test]
    fn zero_boundary_interior_row_sums_vanish() {
        let d = disc(1);
        let map = &d.control;
        let sys = assemble_scalar_laplace(&d, map).unwrap();
        let csc = sys.csc();
        // vertices all of whose patch neighbors are interior
        let mut neighbor_boundary = vec![false; d.mesh.vertex_count()];
        for cell in &d.mesh.cells {
            if cell.iter().any(|&v| d.mesh.is_boundary_vertex(v)) {
                for &v in cell {
                    neighbor_boundary[v] = true;
                }
            }
        }
        let ones = vec![1.0; sys.n];
        let row_sums = {
            // row sums of a symmetric matrix = A * ones
            csc.matvec(&ones)
        };
        let mut checked = 0;
        for v in 0..d.mesh.vertex_count() {
            if let Some(dof) = map.dof(v) {
                if !neighbor_boundary[v] {
                    assert!(row_sums[dof].abs() < 1e-13, "vertex {v}");
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn mass_matrix_total_is_domain_area() {
        let d = disc(2);
        let sys = assemble(
            &d,
            &d.periodic,
            0,
            |cell| LocalContribution {
                mat: local_mass(&d, cell),
                rhs: vec![],
            },
            |_| LocalContribution::zero(0),
        )
        .unwrap();
        let total: f64 = sys.triplets.iter().map(|t| t.2).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }

    #[test]
    fn periodic_laplace_has_one_zero_eigenvalue() {
        let d = disc(0);
        let sys = assemble_scalar_laplace(&d, &d.periodic).unwrap();
        let n = sys.n;
        let mut dense = vec![vec![0.0; n]; n];
        for &(r, c, v) in &sys.triplets {
            dense[r][c] += v;
        }
        let eig = sym_eigenvalues(dense);
        let zeros = eig.iter().filter(|&&l| l.abs() < 1e-10).count();
        assert_eq!(zeros, 1, "eigenvalues {eig:?}");
    }

    #[test]
    fn identity_and_diagonal_solves() {
        let mut sys = SparseSystem::<f64>::new(3, 1, true);
        for i in 0..3 {
            sys.triplets.push((i, i, 1.0));
        }
        sys.rhs[0] = vec![3.0, -1.0, 0.5];
        let x = sys.solve().unwrap();
        assert_eq!(x[0], vec![3.0, -1.0, 0.5]);

        let mut csys = SparseSystem::<Complex64>::new(2, 1, true);
        csys.triplets.push((0, 0, Complex64::new(2.0, 1.0)));
        csys.triplets.push((1, 1, Complex64::new(0.0, -3.0)));
        csys.rhs[0] = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 6.0)];
        let x = csys.solve().unwrap();
        assert!((x[0][0] - Complex64::new(1.0, 0.0) / Complex64::new(2.0, 1.0)).norm() < 1e-14);
        assert!((x[0][1] - Complex64::new(0.0, 6.0) / Complex64::new(0.0, -3.0)).norm() < 1e-14);
    }

    #[test]
    fn singular_system_reports_solver_error() {
        let mut sys = SparseSystem::<f64>::new(2, 1, true);
        sys.triplets.push((0, 0, 1.0));
        sys.triplets.push((0, 1, 1.0));
        sys.triplets.push((1, 0, 1.0));
        sys.triplets.push((1, 1, 1.0));
        sys.rhs[0] = vec![1.0, 2.0];
        assert!(matches!(sys.solve(), Err(Error::Solver(_))));
    }

    fn manufactured_error(level: usize) -> f64 {
        use std::f64::consts::PI;
        let d = disc(level);
        let map = &d.control;
        let f = |p: [f64; 2]| 2.0 * PI * PI * (PI * p[0]).sin() * (PI * p[1]).sin();
        let sys = assemble(
            &d,
            map,
            1,
            |cell| {
                let mut rhs = [0.0; 4];
                for (k, &(p, _)) in VOLUME_QP.iter().enumerate() {
                    let qp = &d.cell_data[cell][k];
                    let phi = shape_values(p);
                    for a in 0..4 {
                        rhs[a] += qp.weight * f(qp.point) * phi[a];
                    }
                }
                LocalContribution {
                    mat: local_laplace(&d, cell),
                    rhs: vec![rhs],
                }
            },
            |_| LocalContribution::zero(1),
        )
        .unwrap();
        let u = &sys.solve().unwrap()[0];
        let exact = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
        let mut err2 = 0.0;
        for (ci, cell) in d.mesh.cells.iter().enumerate() {
            for (k, &(p, _)) in VOLUME_QP.iter().enumerate() {
                let qp = &d.cell_data[ci][k];
                let phi = shape_values(p);
                let mut uh = 0.0;
                for a in 0..4 {
                    if let Some(dof) = map.dof(cell[a]) {
                        uh += u[dof] * phi[a];
                    }
                }
                err2 += qp.weight * (uh - exact(qp.point)).powi(2);
            }
        }
        err2.sqrt()
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let errors: Vec<f64> = (2..5).map(manufactured_error).collect();
        for w in errors.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((1.7..2.4).contains(&rate), "errors {errors:?}, rate {rate}");
        }
    }

    #[test]
    fn tangential_derivative_single_valued_across_interface() {
        let d = disc(2);
        // arbitrary smooth nodal field
        let field: Vec<f64> = d
            .mesh
            .vertices
            .iter()
            .map(|v| (3.1 * v[0] + 1.7 * v[1]).sin() + v[0] * v[1])
            .collect();
        for face in &d.faces {
            for (k, &(s, _)) in FACE_QP.iter().enumerate() {
                let tangent = face.frame.tangent;
                let gi = face.qp[k].grads;
                let inner_cell = d.mesh.cells[face.frame.inner.0];
                let mut di = 0.0;
                for a in 0..4 {
                    di += field[inner_cell[a]] * dot2(&gi[a], &tangent);
                }
                let go = d.face_grads_from_cell(
                    face.frame.outer.0,
                    face.frame.outer.1,
                    &face.frame,
                    s,
                );
                let outer_cell = d.mesh.cells[face.frame.outer.0];
                let mut do_ = 0.0;
                for a in 0..4 {
                    do_ += field[outer_cell[a]] * dot2(&go[a], &tangent);
                }
                assert!((di - do_).abs() < 1e-12, "face mismatch {di} vs {do_}");
            }
        }
    }

    #[test]
    fn complex_solve_matches_real_block_form() {
        // small complex symmetric system solved natively and as the
        // equivalent 2n x 2n real block system
        let d = disc(0);
        let map = &d.periodic;
        let sg = Complex64::new(0.3, 0.9);
        let sys = assemble(
            &d,
            map,
            0,
            |cell| {
                let lap = local_laplace(&d, cell);
                let mass = local_mass(&d, cell);
                let mut mat = [[Complex64::new(0.0, 0.0); 4]; 4];
                for a in 0..4 {
                    for b in 0..4 {
                        mat[a][b] = Complex64::new(lap[a][b], 0.0) + sg * mass[a][b];
                    }
                }
                LocalContribution { mat, rhs: vec![] }
            },
            |_| LocalContribution::zero(0),
        )
        .unwrap();
        let n = sys.n;
        let mut complex_sys = sys.clone();
        complex_sys.rhs = vec![(0..n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect()];
        let xc = &complex_sys.solve().unwrap()[0];

        let mut real_sys = SparseSystem::<f64>::new(2 * n, 1, false);
        for &(r, c, v) in &sys.triplets {
            real_sys.triplets.push((r, c, v.re));
            real_sys.triplets.push((r, n + c, -v.im));
            real_sys.triplets.push((n + r, c, v.im));
            real_sys.triplets.push((n + r, n + c, v.re));
        }
        for i in 0..n {
            real_sys.rhs[0][i] = complex_sys.rhs[0][i].re;
            real_sys.rhs[0][n + i] = complex_sys.rhs[0][i].im;
        }
        let xr = &real_sys.solve().unwrap()[0];
        for i in 0..n {
            assert!((xc[i].re - xr[i]).abs() < 1e-12);
            assert!((xc[i].im - xr[n + i]).abs() < 1e-12);
        }
    }

    #[test]
    fn riesz_solver_recovers_galerkin_identity() {
        let d = disc(2);
        let riesz = RieszSolver::new(&d).unwrap();
        let zero = riesz.solve(&vec![0.0; 2 * riesz.n]).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        // rhs = (grad g, grad .) must return g
        let g: Vec<f64> = (0..2 * riesz.n).map(|i| ((i as f64) * 0.13).sin()).collect();
        let rhs = riesz.map(&g);
        let back = riesz.solve(&rhs).unwrap();
        let err: f64 = g
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn riesz_green_function_symmetry() {
        let d = disc(1);
        let riesz = RieszSolver::new(&d).unwrap();
        let n2 = 2 * riesz.n;
        let (i, j) = (1usize, riesz.n / 2 + 3);
        let mut ei = vec![0.0; n2];
        ei[i] = 1.0;
        let mut ej = vec![0.0; n2];
        ej[j] = 1.0;
        let gi = riesz.solve(&ei).unwrap();
        let gj = riesz.solve(&ej).unwrap();
        assert!((gi[j] - gj[i]).abs() < 1e-12);
    }
}
