//! Small fixed-size real/complex matrix helpers used in per-quadrature-point
//! kinematics and assembly kernels.

pub use num_complex::Complex64;

/// 2x2 real matrix, row major: `m[i][j]`.
pub type Mat2 = [[f64; 2]; 2];

/// 2x2 complex matrix, row major.
pub type CMat2 = [[Complex64; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Inverse of a 2x2 matrix. The caller is responsible for `det != 0`.
pub fn inv2(m: &Mat2) -> Mat2 {
    let d = det2(m);
    [
        [m[1][1] / d, -m[0][1] / d],
        [-m[1][0] / d, m[0][0] / d],
    ]
}

pub fn matmul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn transpose2(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

/// `m^T v`.
pub fn matt_vec(m: &Mat2, v: &[f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[1][0] * v[1], m[0][1] * v[0] + m[1][1] * v[1]]
}

/// `m v`.
pub fn mat_vec(m: &Mat2, v: &[f64; 2]) -> [f64; 2] {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}

pub fn trace2(m: &Mat2) -> f64 {
    m[0][0] + m[1][1]
}

/// Frobenius inner product of two real 2x2 matrices.
pub fn frob2(a: &Mat2, b: &Mat2) -> f64 {
    let mut s = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn norm2(v: &[f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub fn dot2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Complex 2-vector dot product without conjugation: `sum_i a_i b_i`.
pub fn cdot2(a: &[Complex64; 2], b: &[Complex64; 2]) -> Complex64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `m v` for complex matrix and complex vector.
pub fn cmat_vec(m: &CMat2, v: &[Complex64; 2]) -> [Complex64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

pub fn conj2(v: &[Complex64; 2]) -> [Complex64; 2] {
    [v[0].conj(), v[1].conj()]
}

pub fn real_to_complex2(v: &[f64; 2]) -> [Complex64; 2] {
    [Complex64::new(v[0], 0.0), Complex64::new(v[1], 0.0)]
}

/// Congruence transform `a M a^T` scaled by `s`, for real `a` and complex `M`.
pub fn congruence_scaled(a: &Mat2, m: &CMat2, s: f64) -> CMat2 {
    let mut am = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            am[i][j] = m[0][j] * a[i][0] + m[1][j] * a[i][1];
        }
    }
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = (am[i][0] * a[j][0] + am[i][1] * a[j][1]) * s;
        }
    }
    out
}
