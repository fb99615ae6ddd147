use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::stream::RandomStream;

pub const MAX_REJECTIONS: usize = 100;

/// An input matrix and its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSample {
    pub x: Matrix,
    pub y: Matrix,
}

/// Draw `X` with i.i.d. standard Gaussian entries, rejecting draws whose
/// condition number exceeds `condition_cap`, and pair it with `X⁻¹`.
pub fn sample_task(d: usize, stream: &mut RandomStream, condition_cap: f64) -> Result<TaskSample> {
    if d == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    for _ in 0..MAX_REJECTIONS {
        let x = linalg::gaussian_matrix(d, d, stream);
        if linalg::condition_number(&x) > condition_cap {
            continue;
        }
        let y = linalg::lu_inverse(&x)?;
        return Ok(TaskSample { x, y });
    }
    Err(Error::Config(format!(
        "{MAX_REJECTIONS} consecutive draws exceeded the condition-number cap {condition_cap:e}"
    )))
}

/// `ℓ(y, ŷ) = ‖y⁻¹ŷ − I‖_F`.
pub fn loss(y: &Matrix, yhat: &Matrix) -> Result<f64> {
    let x = linalg::lu_inverse(y)?;
    loss_from_input(&x, yhat)
}

/// The same loss written in terms of the input `x = y⁻¹`.
pub fn loss_from_input(x: &Matrix, yhat: &Matrix) -> Result<f64> {
    if x.shape() != yhat.shape() || x.nrows() != x.ncols() {
        return Err(Error::InputShape {
            expected: format!("{0}x{0}", x.nrows()),
            got: format!("{}x{}", yhat.nrows(), yhat.ncols()),
        });
    }
    let d = x.nrows();
    Ok((x * yhat - Matrix::identity(d, d)).norm())
}

/// `ℓ` and `∂ℓ/∂ŷ = xᵀ(xŷ − I)/ℓ`; the gradient is taken to be zero at `ℓ = 0`.
pub(crate) fn loss_and_grad(x: &Matrix, yhat: &Matrix) -> (f64, Matrix) {
    let d = x.nrows();
    let e = x * yhat - Matrix::identity(d, d);
    let l = e.norm();
    if l == 0.0 {
        return (0.0, Matrix::zeros(d, d));
    }
    (l, x.tr_mul(&e) / l)
}
