//! Interface-fitted quadrilateral mesh of the reference unit cell.
//!
//! The cell is the unit square with a circular interface of radius `r`
//! centered at (0.5, 0.5). The coarse partition has 13 cells: one core
//! quad and four blended ring quads inside the circle, and eight quads
//! between the circle and the square boundary (four side cells owning
//! the circle faces and four corner cells). Uniform refinement splits
//! every quad in four; new vertices on interface faces are projected
//! radially onto the circle and cell midpoints are placed by transfinite
//! interpolation so the fitted property is preserved on every level.

use crate::linalg::{dot2, norm2};
use crate::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

pub const CENTER: [f64; 2] = [0.5, 0.5];

/// Cells in the coarse partition.
pub const BASE_CELLS: usize = 13;

/// Radial position of the core-square corners relative to the circle
/// radius. Chosen to roughly equilibrate the side lengths of the core
/// and ring cells.
const CORE_FACTOR: f64 = 0.414_213_562_373_095_04; // 1/(1+sqrt(2))

/// Absolute tolerance for "vertex lies on the interface circle".
const ON_CIRCLE_TOL: f64 = 1e-9;

/// Tolerance for matching periodic partner coordinates.
const PERIODIC_TOL: f64 = 1e-12;

/// Default refinement budget (number of cells).
pub const DEFAULT_CELL_BUDGET: usize = 4_194_304;

/// Local face `f` of a quad connects corners `FACE_VERTS[f].0 -> .1`.
pub const FACE_VERTS: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];

/// Conforming quadrilateral mesh fitted to the circular interface.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counterclockwise vertex indices per cell.
    pub cells: Vec<[usize; 4]>,
    /// All (cell, local face) pairs whose both endpoints lie on the
    /// circle. Every geometric interface face appears twice, once from
    /// the cell inside the circle and once from the cell outside.
    pub interface_faces: Vec<(usize, usize)>,
    /// (slave, master) vertex pairs identifying x=1 with x=0 and y=1
    /// with y=0.
    pub periodic_pairs: Vec<(usize, usize)>,
    pub refinement_level: usize,
    pub radius: f64,
}

impl PartialEq for Mesh {
    /// Structural equality; `radius` is derived metadata (the loader
    /// infers it from the interface vertices) and not compared.
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.cells == other.cells
            && self.interface_faces == other.interface_faces
            && self.periodic_pairs == other.periodic_pairs
            && self.refinement_level == other.refinement_level
    }
}

/// Unit tangent/normal frame and quadrature data of one geometric
/// interface face. The face is a straight segment, so the frame is
/// shared by its quadrature points.
#[derive(Debug, Clone)]
pub struct InterfaceFrame {
    /// Cell inside the circle and the local face index there.
    pub inner: (usize, usize),
    /// Cell outside the circle and the local face index there.
    pub outer: (usize, usize),
    /// Endpoints ordered counterclockwise around the circle center.
    pub endpoints: [usize; 2],
    /// Unit tangent along the counterclockwise traversal.
    pub tangent: [f64; 2],
    /// Unit normal pointing away from the enclosed region.
    pub normal: [f64; 2],
    /// Face length (reference measure).
    pub length: f64,
    /// Quadrature points on the segment with weights summing to `length`.
    pub points: [[f64; 2]; 2],
    pub weights: [f64; 2],
}

pub fn generate_reference_mesh(radius: f64, refinements: usize) -> Result<Mesh> {
    generate_reference_mesh_with_budget(radius, refinements, DEFAULT_CELL_BUDGET)
}

pub fn generate_reference_mesh_with_budget(
    radius: f64,
    refinements: usize,
    max_cells: usize,
) -> Result<Mesh> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(Error::Config(format!(
            "interface radius must lie in (0, 0.5), got {radius}"
        )));
    }
    let cells = BASE_CELLS
        .checked_mul(4usize.checked_pow(refinements as u32).unwrap_or(usize::MAX))
        .unwrap_or(usize::MAX);
    if cells > max_cells {
        return Err(Error::Resource(format!(
            "refinement {refinements} needs {cells} cells, budget is {max_cells}"
        )));
    }
    let mut mesh = base_mesh(radius);
    for _ in 0..refinements {
        mesh = refine_once(&mesh);
    }
    mesh.validate()?;
    Ok(mesh)
}

fn base_mesh(radius: f64) -> Mesh {
    let c = CENTER;
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let core = radius * CORE_FACTOR;
    let k = |sx: f64, sy: f64| [c[0] + core * diag * sx, c[1] + core * diag * sy];
    let d = |sx: f64, sy: f64| [c[0] + radius * diag * sx, c[1] + radius * diag * sy];
    let vertices = vec![
        k(1.0, 1.0),   // 0 core NE
        k(-1.0, 1.0),  // 1 core NW
        k(-1.0, -1.0), // 2 core SW
        k(1.0, -1.0),  // 3 core SE
        d(1.0, 1.0),   // 4 circle NE
        d(-1.0, 1.0),  // 5 circle NW
        d(-1.0, -1.0), // 6 circle SW
        d(1.0, -1.0),  // 7 circle SE
        [0.0, 0.0],    // 8
        [1.0, 0.0],    // 9
        [1.0, 1.0],    // 10
        [0.0, 1.0],    // 11
        [1.0 / 3.0, 0.0], // 12
        [2.0 / 3.0, 0.0], // 13
        [1.0, 1.0 / 3.0], // 14
        [1.0, 2.0 / 3.0], // 15
        [2.0 / 3.0, 1.0], // 16
        [1.0 / 3.0, 1.0], // 17
        [0.0, 2.0 / 3.0], // 18
        [0.0, 1.0 / 3.0], // 19
    ];
    let cells = vec![
        [2, 3, 0, 1],     // core
        [3, 7, 4, 0],     // ring E
        [0, 4, 5, 1],     // ring N
        [1, 5, 6, 2],     // ring W
        [2, 6, 7, 3],     // ring S
        [4, 15, 10, 16],  // corner NE
        [5, 17, 11, 18],  // corner NW
        [6, 19, 8, 12],   // corner SW
        [7, 13, 9, 14],   // corner SE
        [5, 4, 16, 17],   // side N
        [4, 7, 14, 15],   // side E
        [12, 13, 7, 6],   // side S
        [19, 6, 5, 18],   // side W
    ];
    let mut mesh = Mesh {
        vertices,
        cells,
        interface_faces: Vec::new(),
        periodic_pairs: Vec::new(),
        refinement_level: 0,
        radius,
    };
    mesh.interface_faces = find_interface_faces(&mesh);
    mesh.periodic_pairs = find_periodic_pairs(&mesh.vertices);
    mesh
}

fn on_circle(v: &[f64; 2], radius: f64) -> bool {
    (dist_center(v) - radius).abs() < ON_CIRCLE_TOL
}

fn dist_center(v: &[f64; 2]) -> f64 {
    norm2(&[v[0] - CENTER[0], v[1] - CENTER[1]])
}

fn find_interface_faces(mesh: &Mesh) -> Vec<(usize, usize)> {
    let mut faces = Vec::new();
    for (ci, cell) in mesh.cells.iter().enumerate() {
        for (fi, &(a, b)) in FACE_VERTS.iter().enumerate() {
            if on_circle(&mesh.vertices[cell[a]], mesh.radius)
                && on_circle(&mesh.vertices[cell[b]], mesh.radius)
            {
                faces.push((ci, fi));
            }
        }
    }
    faces
}

fn find_periodic_pairs(vertices: &[[f64; 2]]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    // Sorted (coordinate, vertex) lists of the master sides x=0 and y=0.
    let mut left: Vec<(f64, usize)> = Vec::new();
    let mut bottom: Vec<(f64, usize)> = Vec::new();
    for (i, v) in vertices.iter().enumerate() {
        if v[0].abs() < PERIODIC_TOL {
            left.push((v[1], i));
        }
        if v[1].abs() < PERIODIC_TOL {
            bottom.push((v[0], i));
        }
    }
    left.sort_by(|a, b| a.0.total_cmp(&b.0));
    bottom.sort_by(|a, b| a.0.total_cmp(&b.0));
    let lookup = |list: &[(f64, usize)], coord: f64| -> Option<usize> {
        let idx = list.partition_point(|&(c, _)| c < coord);
        for j in idx.saturating_sub(1)..(idx + 1).min(list.len()) {
            if (list[j].0 - coord).abs() < PERIODIC_TOL {
                return Some(list[j].1);
            }
        }
        None
    };
    for (i, v) in vertices.iter().enumerate() {
        if (v[0] - 1.0).abs() < PERIODIC_TOL {
            if let Some(m) = lookup(&left, v[1]) {
                pairs.push((i, m));
            }
        }
        if (v[1] - 1.0).abs() < PERIODIC_TOL {
            if let Some(m) = lookup(&bottom, v[0]) {
                pairs.push((i, m));
            }
        }
    }
    pairs
}

fn refine_once(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut edge_mid: HashMap<(usize, usize), usize> = HashMap::new();
    let interface_edges: std::collections::HashSet<(usize, usize)> = mesh
        .interface_faces
        .iter()
        .map(|&(ci, fi)| {
            let (a, b) = FACE_VERTS[fi];
            sorted_pair(mesh.cells[ci][a], mesh.cells[ci][b])
        })
        .collect();

    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        let key = sorted_pair(a, b);
        if let Some(&m) = edge_mid.get(&key) {
            return m;
        }
        let va = vertices[a];
        let vb = vertices[b];
        let mut m = [(va[0] + vb[0]) / 2.0, (va[1] + vb[1]) / 2.0];
        if interface_edges.contains(&key) {
            // circular manifold attachment: project radially
            let d = dist_center(&m);
            m = [
                CENTER[0] + (m[0] - CENTER[0]) * mesh.radius / d,
                CENTER[1] + (m[1] - CENTER[1]) * mesh.radius / d,
            ];
        }
        let idx = vertices.len();
        vertices.push(m);
        edge_mid.insert(key, idx);
        idx
    };

    let mut cells = Vec::with_capacity(mesh.cells.len() * 4);
    for cell in &mesh.cells {
        let [v0, v1, v2, v3] = *cell;
        let m01 = midpoint(v0, v1, &mut vertices);
        let m12 = midpoint(v1, v2, &mut vertices);
        let m23 = midpoint(v2, v3, &mut vertices);
        let m30 = midpoint(v3, v0, &mut vertices);
        // transfinite blending: midpoint of edge midpoints minus the
        // corner average, exact bilinear center for straight cells
        let mut cc = [0.0, 0.0];
        for d in 0..2 {
            cc[d] = 0.5
                * (vertices[m01][d] + vertices[m12][d] + vertices[m23][d] + vertices[m30][d])
                - 0.25 * (vertices[v0][d] + vertices[v1][d] + vertices[v2][d] + vertices[v3][d]);
        }
        let c = vertices.len();
        vertices.push(cc);
        cells.push([v0, m01, c, m30]);
        cells.push([m01, v1, m12, c]);
        cells.push([c, m12, v2, m23]);
        cells.push([m30, c, m23, v3]);
    }

    let mut out = Mesh {
        vertices,
        cells,
        interface_faces: Vec::new(),
        periodic_pairs: Vec::new(),
        refinement_level: mesh.refinement_level + 1,
        radius: mesh.radius,
    };
    out.interface_faces = find_interface_faces(&out);
    out.periodic_pairs = find_periodic_pairs(&out.vertices);
    out
}

fn sorted_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Largest vertex-to-vertex distance of a cell.
    pub fn cell_diameter(&self, cell: usize) -> f64 {
        let c = self.cells[cell];
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                let a = self.vertices[c[i]];
                let b = self.vertices[c[j]];
                d = d.max(norm2(&[a[0] - b[0], a[1] - b[1]]));
            }
        }
        d
    }

    pub fn max_cell_diameter(&self) -> f64 {
        (0..self.cells.len())
            .map(|c| self.cell_diameter(c))
            .fold(0.0, f64::max)
    }

    /// True for vertices on the square boundary.
    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let p = self.vertices[v];
        p[0].abs() < PERIODIC_TOL
            || p[1].abs() < PERIODIC_TOL
            || (p[0] - 1.0).abs() < PERIODIC_TOL
            || (p[1] - 1.0).abs() < PERIODIC_TOL
    }

    /// Corner Jacobians of the bilinear map. The Jacobian determinant is
    /// bilinear on the reference square, so positivity at the corners
    /// implies positivity everywhere.
    pub fn corner_jacobians(&self, cell: usize) -> [f64; 4] {
        let c = self.cells[cell];
        let v: Vec<[f64; 2]> = c.iter().map(|&i| self.vertices[i]).collect();
        let cross = |a: [f64; 2], b: [f64; 2]| a[0] * b[1] - a[1] * b[0];
        let e = |i: usize, j: usize| [v[j][0] - v[i][0], v[j][1] - v[i][1]];
        [
            cross(e(0, 1), e(0, 3)),
            cross(e(0, 1), e(1, 2)),
            cross(e(3, 2), e(1, 2)),
            cross(e(3, 2), e(0, 3)),
        ]
    }

    /// Geometric interface faces with tangent/normal frames, deduplicated
    /// and ordered as a closed counterclockwise loop around the circle.
    pub fn interface_frames(&self) -> Vec<InterfaceFrame> {
        let mut by_edge: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for &(ci, fi) in &self.interface_faces {
            let (a, b) = FACE_VERTS[fi];
            let key = sorted_pair(self.cells[ci][a], self.cells[ci][b]);
            by_edge.entry(key).or_default().push((ci, fi));
        }
        let mut frames: Vec<InterfaceFrame> = Vec::with_capacity(by_edge.len());
        for (&(va, vb), sides) in &by_edge {
            assert_eq!(sides.len(), 2, "interface face must have two sides");
            // counterclockwise around the center
            let a = self.vertices[va];
            let b = self.vertices[vb];
            let ra = [a[0] - CENTER[0], a[1] - CENTER[1]];
            let ab = [b[0] - a[0], b[1] - a[1]];
            let (v0, v1) = if ra[0] * ab[1] - ra[1] * ab[0] > 0.0 {
                (va, vb)
            } else {
                (vb, va)
            };
            let p0 = self.vertices[v0];
            let p1 = self.vertices[v1];
            let seg = [p1[0] - p0[0], p1[1] - p0[1]];
            let len = norm2(&seg);
            let tangent = [seg[0] / len, seg[1] / len];
            let normal = [tangent[1], -tangent[0]];
            let mid = [(p0[0] + p1[0]) / 2.0, (p0[1] + p1[1]) / 2.0];
            debug_assert!(dot2(&normal, &[mid[0] - CENTER[0], mid[1] - CENTER[1]]) > 0.0);
            // classify sides: the inner cell's centroid is closer to the center
            let centroid_r = |ci: usize| {
                let cell = self.cells[ci];
                let mut c = [0.0, 0.0];
                for &v in &cell {
                    c[0] += self.vertices[v][0] / 4.0;
                    c[1] += self.vertices[v][1] / 4.0;
                }
                dist_center(&c)
            };
            let (inner, outer) = if centroid_r(sides[0].0) < centroid_r(sides[1].0) {
                (sides[0], sides[1])
            } else {
                (sides[1], sides[0])
            };
            let g = 0.5 / f64::sqrt(3.0);
            let qp = |s: f64| [p0[0] + s * seg[0], p0[1] + s * seg[1]];
            frames.push(InterfaceFrame {
                inner,
                outer,
                endpoints: [v0, v1],
                tangent,
                normal,
                length: len,
                points: [qp(0.5 - g), qp(0.5 + g)],
                weights: [len / 2.0, len / 2.0],
            });
        }
        // order into a loop by angle of the face midpoint
        frames.sort_by(|f, g| {
            let ang = |fr: &InterfaceFrame| {
                let m = [
                    (self.vertices[fr.endpoints[0]][0] + self.vertices[fr.endpoints[1]][0]) / 2.0
                        - CENTER[0],
                    (self.vertices[fr.endpoints[0]][1] + self.vertices[fr.endpoints[1]][1]) / 2.0
                        - CENTER[1],
                ];
                m[1].atan2(m[0])
            };
            ang(f).total_cmp(&ang(g))
        });
        frames
    }

    /// Structural and geometric consistency checks shared by the
    /// generator and the file loader.
    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        // cell count must fit the refinement hierarchy
        let mut count = BASE_CELLS;
        let mut level = 0;
        while count < self.cells.len() {
            count *= 4;
            level += 1;
        }
        if count != self.cells.len() {
            return Err(Error::Validation(format!(
                "cell count {} is not 13*4^k",
                self.cells.len()
            )));
        }
        if level != self.refinement_level {
            return Err(Error::Validation(format!(
                "refinement level {} does not match cell count {}",
                self.refinement_level,
                self.cells.len()
            )));
        }
        for (ci, cell) in self.cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= nv) {
                return Err(Error::Validation(format!(
                    "cell {ci} references a vertex out of range"
                )));
            }
            let mut sorted = *cell;
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!("cell {ci} repeats a vertex")));
            }
            let j = self.corner_jacobians(ci);
            if j.iter().any(|&x| x <= 0.0) {
                return Err(Error::Validation(format!(
                    "cell {ci} has non-positive bilinear Jacobian (corners {j:?})"
                )));
            }
        }
        // conformity: interior edges are shared by exactly two cells with
        // opposite orientation, boundary edges by one
        let mut edge_use: HashMap<(usize, usize), i32> = HashMap::new();
        for cell in &self.cells {
            for &(a, b) in &FACE_VERTS {
                let (va, vb) = (cell[a], cell[b]);
                let key = sorted_pair(va, vb);
                *edge_use.entry(key).or_insert(0) += if va < vb { 1 } else { -1 };
            }
        }
        for (&(a, b), &net) in &edge_use {
            let boundary = self.is_boundary_vertex(a) && self.is_boundary_vertex(b);
            if net != 0 && !boundary {
                return Err(Error::Validation(format!(
                    "edge ({a},{b}) is non-conforming or inconsistently oriented"
                )));
            }
        }
        // interface endpoints on the circle
        for &(ci, fi) in &self.interface_faces {
            let (a, b) = FACE_VERTS[fi];
            for &v in &[self.cells[ci][a], self.cells[ci][b]] {
                if (dist_center(&self.vertices[v]) - self.radius).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "interface vertex {v} is off the circle"
                    )));
                }
            }
        }
        // periodic pairing is a bijection per axis
        let mut x_masters = HashMap::new();
        let mut y_masters = HashMap::new();
        let mut x_slaves = 0usize;
        let mut y_slaves = 0usize;
        for &(s, m) in &self.periodic_pairs {
            if s >= nv || m >= nv {
                return Err(Error::Validation(
                    "periodic pair references a vertex out of range".into(),
                ));
            }
            let vs = self.vertices[s];
            let vm = self.vertices[m];
            if (vs[0] - 1.0).abs() < PERIODIC_TOL && vm[0].abs() < PERIODIC_TOL {
                x_slaves += 1;
                if x_masters.insert(m, s).is_some() {
                    return Err(Error::Validation(format!(
                        "periodic x-master {m} is used twice"
                    )));
                }
                if (vs[1] - vm[1]).abs() > PERIODIC_TOL {
                    return Err(Error::Validation(format!("periodic pair ({s},{m}) mismatch")));
                }
            } else if (vs[1] - 1.0).abs() < PERIODIC_TOL && vm[1].abs() < PERIODIC_TOL {
                y_slaves += 1;
                if y_masters.insert(m, s).is_some() {
                    return Err(Error::Validation(format!(
                        "periodic y-master {m} is used twice"
                    )));
                }
                if (vs[0] - vm[0]).abs() > PERIODIC_TOL {
                    return Err(Error::Validation(format!("periodic pair ({s},{m}) mismatch")));
                }
            } else {
                return Err(Error::Validation(format!(
                    "periodic pair ({s},{m}) does not connect opposing sides"
                )));
            }
        }
        let on_side = |f: &dyn Fn(&[f64; 2]) -> f64| {
            self.vertices.iter().filter(|v| f(v).abs() < PERIODIC_TOL).count()
        };
        let right = on_side(&|v: &[f64; 2]| v[0] - 1.0);
        let left = on_side(&|v: &[f64; 2]| v[0]);
        let top = on_side(&|v: &[f64; 2]| v[1] - 1.0);
        let bottom = on_side(&|v: &[f64; 2]| v[1]);
        if x_slaves != right || x_slaves != left || y_slaves != top || y_slaves != bottom {
            return Err(Error::Validation(
                "periodic pairing is not a bijection between opposing sides".into(),
            ));
        }
        Ok(())
    }

    /// Serializes to the plain-text mesh format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("unitcellmesh 1\n");
        let _ = writeln!(s, "vertices {}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:.16e} {:.16e}", v[0], v[1]);
        }
        let _ = writeln!(s, "cells {}", self.cells.len());
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {} {}", c[0], c[1], c[2], c[3]);
        }
        let _ = writeln!(s, "interface {}", self.interface_faces.len());
        for &(c, f) in &self.interface_faces {
            let _ = writeln!(s, "{c} {f}");
        }
        let _ = writeln!(s, "periodic {}", self.periodic_pairs.len());
        for &(s_, m) in &self.periodic_pairs {
            let _ = writeln!(s, "{s_} {m}");
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_text()).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Mesh> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Mesh::from_text(&text, &path.as_ref().display().to_string())
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Mesh> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let perr = |line: usize, msg: String| Error::Parse {
            path: origin.to_string(),
            line,
            msg,
        };
        let (line, header) = lines
            .next()
            .ok_or_else(|| perr(1, "empty mesh file".into()))?;
        if header != "unitcellmesh 1" {
            return Err(perr(line, format!("expected 'unitcellmesh 1', got '{header}'")));
        }
        let expect_count = |name: &str, lines: &mut dyn Iterator<Item = (usize, &str)>| {
            let (line, l) = lines
                .next()
                .ok_or_else(|| perr(0, format!("missing '{name}' section")))?;
            let mut it = l.split_whitespace();
            match (it.next(), it.next().map(str::parse::<usize>), it.next()) {
                (Some(k), Some(Ok(n)), None) if k == name => Ok(n),
                _ => Err(perr(line, format!("expected '{name} <count>', got '{l}'"))),
            }
        };
        let nv = expect_count("vertices", &mut lines)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, l) = lines
                .next()
                .ok_or_else(|| perr(0, "unexpected end of vertex list".into()))?;
            let mut it = l.split_whitespace().map(str::parse::<f64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), None) if x.is_finite() && y.is_finite() => {
                    vertices.push([x, y])
                }
                _ => return Err(perr(line, format!("bad vertex line '{l}'"))),
            }
        }
        let nc = expect_count("cells", &mut lines)?;
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (line, l) = lines
                .next()
                .ok_or_else(|| perr(0, "unexpected end of cell list".into()))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(str::parse::<usize>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(line, format!("bad cell line '{l}': {e}")))?;
            if idx.len() != 4 {
                return Err(perr(line, format!("cell needs 4 vertices, got {}", idx.len())));
            }
            cells.push([idx[0], idx[1], idx[2], idx[3]]);
        }
        let ni = expect_count("interface", &mut lines)?;
        let mut interface_faces = Vec::with_capacity(ni);
        for _ in 0..ni {
            let (line, l) = lines
                .next()
                .ok_or_else(|| perr(0, "unexpected end of interface list".into()))?;
            let mut it = l.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(c)), Some(Ok(f)), None) if f < 4 => interface_faces.push((c, f)),
                _ => return Err(perr(line, format!("bad interface line '{l}'"))),
            }
        }
        let np = expect_count("periodic", &mut lines)?;
        let mut periodic_pairs = Vec::with_capacity(np);
        for _ in 0..np {
            let (line, l) = lines
                .next()
                .ok_or_else(|| perr(0, "unexpected end of periodic list".into()))?;
            let mut it = l.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(s)), Some(Ok(m)), None) => periodic_pairs.push((s, m)),
                _ => return Err(perr(line, format!("bad periodic line '{l}'"))),
            }
        }
        if let Some((line, l)) = lines.next() {
            return Err(perr(line, format!("trailing content '{l}'")));
        }
        // infer radius from the interface vertices
        let radius = interface_faces
            .first()
            .map(|&(c, f)| {
                let cell = cells.get(c).copied().unwrap_or([0; 4]);
                let v = cell[FACE_VERTS[f].0];
                vertices
                    .get(v)
                    .map(dist_center)
                    .unwrap_or(0.0)
            })
            .unwrap_or(0.0);
        let level = {
            let mut count = BASE_CELLS;
            let mut level = 0usize;
            while count < cells.len() {
                count *= 4;
                level += 1;
            }
            level
        };
        let mesh = Mesh {
            vertices,
            cells,
            interface_faces,
            periodic_pairs,
            refinement_level: level,
            radius,
        };
        mesh.validate()?;
        Ok(mesh)
    }
}
