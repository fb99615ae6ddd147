//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stream::RandomStream;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn frobenius(m: &Matrix) -> f64 {
    m.norm()
}

/// ‖QᵀQ − I‖_F.
pub fn orthogonality_defect(q: &Matrix) -> f64 {
    let n = q.ncols();
    (q.transpose() * q - Matrix::identity(n, n)).norm()
}

pub fn gaussian_matrix(rows: usize, cols: usize, stream: &mut RandomStream) -> Matrix {
    // Filled row-major so the draw order matches the flattening convention.
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = stream.standard_normal();
        }
    }
    m
}

pub fn gaussian_vector(n: usize, stream: &mut RandomStream) -> Vector {
    Vector::from_fn(n, |_, _| stream.standard_normal())
}

/// Q factor of a QR decomposition with the signs of R's diagonal absorbed,
/// so that R has a nonnegative diagonal and Q is unique for invertible input.
pub fn qr_sign_fixed(m: &Matrix) -> Matrix {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Lower-triangular Cholesky factor with positive diagonal.
pub fn cholesky_lower(p: &Matrix) -> Result<Matrix> {
    let min_eig = min_symmetric_eigenvalue(p);
    let trace = p.trace();
    if !(min_eig > 1e-12 * trace) || !trace.is_finite() {
        return Err(Error::NotPositiveDefinite { min_eig });
    }
    let sym = (p + p.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite { min_eig })
}

pub fn min_symmetric_eigenvalue(p: &Matrix) -> f64 {
    let sym = (p + p.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Ratio of smallest to largest singular value; 0 for the zero matrix.
pub fn singular_value_ratio(m: &Matrix) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max > 0.0 && max.is_finite() {
        min / max
    } else {
        0.0
    }
}

pub fn condition_number(m: &Matrix) -> f64 {
    let r = singular_value_ratio(m);
    if r > 0.0 {
        1.0 / r
    } else {
        f64::INFINITY
    }
}

/// Inverse via LU, refusing matrices with |det| ≤ 1e−12.
pub fn lu_inverse(m: &Matrix) -> Result<Matrix> {
    let lu = m.clone().lu();
    let det = lu.determinant();
    if !(det.abs() > 1e-12) {
        return Err(Error::Singular { det });
    }
    lu.try_inverse().ok_or(Error::Singular { det })
}

/// Row-major flattening; the frozen convention for feeding matrices to MLPs.
pub fn flatten_row_major(m: &Matrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn unflatten_row_major(v: &[f64], rows: usize, cols: usize) -> Matrix {
    assert_eq!(v.len(), rows * cols);
    Matrix::from_row_slice(rows, cols, v)
}

pub fn rotation2(theta: f64) -> Matrix {
    let (s, c) = theta.sin_cos();
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}
