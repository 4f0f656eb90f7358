//! Small dense helpers shared by every module.
//!
//! Chart points and tangent vectors are `Vector2<f64>`; connection and
//! potential values are dynamically sized complex matrices.

use nalgebra::{DMatrix, Matrix2, Vector2};

pub use nalgebra::Complex;

pub type Complex64 = Complex<f64>;
pub type Point = Vector2<f64>;
pub type Tangent = Vector2<f64>;
pub type CMatrix = DMatrix<Complex64>;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(n: usize) -> CMatrix {
    CMatrix::zeros(n, n)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn scale(m: &CMatrix, s: f64) -> CMatrix {
    m * Complex64::new(s, 0.0)
}

/// `acc += w * m`
pub fn axpy(acc: &mut CMatrix, w: f64, m: &CMatrix) {
    for (a, b) in acc.iter_mut().zip(m.iter()) {
        *a += b * w;
    }
}

/// Pauli matrices σ₁, σ₂, σ₃.
pub fn pauli(k: usize) -> CMatrix {
    let o = c64(0.0, 0.0);
    let one = c64(1.0, 0.0);
    let i = c64(0.0, 1.0);
    match k {
        1 => CMatrix::from_row_slice(2, 2, &[o, one, one, o]),
        2 => CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        3 => CMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
        _ => panic!("pauli index must be 1, 2 or 3"),
    }
}

pub fn skew_hermitian_defect(m: &CMatrix) -> f64 {
    frobenius(&(m + m.adjoint()))
}

/// Quadratic form `uᵀ G w` for a 2×2 matrix.
pub fn bilinear(g: &Matrix2<f64>, u: &Vector2<f64>, w: &Vector2<f64>) -> f64 {
    u.dot(&(g * w))
}

/// Rotation by +90°.
pub fn perp(v: &Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}
