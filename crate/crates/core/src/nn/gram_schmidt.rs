//! Modified Gram-Schmidt onto O(d) and its reverse-mode derivative.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Columns whose singular-value ratio falls below this are rejected.
pub const DEGENERACY_RATIO: f64 = 1e-10;

/// Intermediates of one modified Gram-Schmidt pass.
#[derive(Clone, Debug)]
pub struct GramSchmidtTape {
    q: Matrix,
    r: Matrix,
    /// `partials[j][i]` is column `j` after removing its components along
    /// `q_0 .. q_{i-1}`.
    partials: Vec<Vec<Vector>>,
}

impl GramSchmidtTape {
    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Upper-triangular factor with positive diagonal, `M = Q R`.
    pub fn r(&self) -> &Matrix {
        &self.r
    }
}

pub fn gram_schmidt_project(m: &Matrix) -> Result<Matrix> {
    gram_schmidt_forward(m).map(|(q, _)| q)
}

pub fn gram_schmidt_forward(m: &Matrix) -> Result<(Matrix, GramSchmidtTape)> {
    let d = m.ncols();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram-Schmidt input".into()));
    }
    let ratio = linalg::singular_value_ratio(m);
    if !(ratio > DEGENERACY_RATIO) {
        return Err(Error::DegenerateProjection { ratio });
    }
    let mut q = Matrix::zeros(m.nrows(), d);
    let mut r = Matrix::zeros(d, d);
    let mut partials = Vec::with_capacity(d);
    for j in 0..d {
        let mut v: Vector = m.column(j).into_owned();
        let mut steps = Vec::with_capacity(j + 1);
        steps.push(v.clone());
        for i in 0..j {
            let qi = q.column(i);
            let rij = qi.dot(&v);
            v.axpy(-rij, &qi, 1.0);
            r[(i, j)] = rij;
            steps.push(v.clone());
        }
        let n = v.norm();
        r[(j, j)] = n;
        q.set_column(j, &(v / n));
        partials.push(steps);
    }
    let defect = linalg::orthogonality_defect(&q);
    if defect > 1e-10 {
        return Err(Error::DegenerateProjection { ratio });
    }
    Ok((q.clone(), GramSchmidtTape { q, r, partials }))
}

/// Pull a gradient with respect to `Q` back to the input matrix by running
/// the recurrences in reverse.
pub fn gram_schmidt_backward(tape: &GramSchmidtTape, q_grad: &Matrix) -> Matrix {
    let d = tape.q.ncols();
    let mut q_bar = q_grad.clone();
    let mut m_bar = Matrix::zeros(tape.q.nrows(), d);
    for j in (0..d).rev() {
        let qj = tape.q.column(j);
        let n = tape.r[(j, j)];
        let gj: Vector = q_bar.column(j).into_owned();
        // q_j = v / |v|
        let mut v_bar = (&gj - qj * qj.dot(&gj)) / n;
        for i in (0..j).rev() {
            let qi: Vector = tape.q.column(i).into_owned();
            let rij = tape.r[(i, j)];
            let v_prev = &tape.partials[j][i];
            // v' = v - r q_i, r = q_i · v
            let r_bar = -qi.dot(&v_bar);
            let mut col = q_bar.column_mut(i);
            col.axpy(-rij, &v_bar, 1.0);
            col.axpy(r_bar, v_prev, 1.0);
            v_bar.axpy(r_bar, &qi, 1.0);
        }
        m_bar.set_column(j, &v_bar);
    }
    m_bar
}
