//! Dense tensors with reverse-mode vector-Jacobian products, scoped to the
//! operations the deep-prior network needs.

mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{directional_check, gradient_check, relative_error};
pub use kernels::{conv2d, leaky_relu, upsample_bilinear_2x};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{dot, norm, Tensor};
