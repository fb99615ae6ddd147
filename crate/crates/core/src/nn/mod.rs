//! Neural-network primitives with hand-written reverse mode.

mod adam;
pub mod checkpoint;
mod gram_schmidt;
mod mlp;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use gram_schmidt::{
    gram_schmidt_backward, gram_schmidt_forward, gram_schmidt_project, GramSchmidtTape,
};
pub use mlp::{Activation, Layer, MlpCache, MlpGrads, MlpParams};

use crate::linalg::Matrix;
use crate::stream::RandomStream;

/// I.i.d. standard normal entries, drawn in row-major order.
pub fn gaussian_noise(rows: usize, cols: usize, stream: &mut RandomStream) -> Matrix {
    crate::linalg::gaussian_matrix(rows, cols, stream)
}
