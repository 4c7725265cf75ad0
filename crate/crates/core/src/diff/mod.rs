//! Dense and sparse kernels with reverse-mode differentiation.

mod gradcheck;
mod sparse;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use sparse::CsrMatrix;
pub use tape::{logsumexp, Gradients, Tape, Var};
pub use tensor::Tensor;
