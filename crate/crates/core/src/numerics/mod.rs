//! Tensor storage, the reverse-mode tape, initialization and the optimizer.

pub mod adam;
pub mod autograd;
pub mod gradcheck;
pub mod init;
pub mod kernels;
pub mod tensor;

pub use adam::Adam;
pub use autograd::{Gradients, Graph, Var};
pub use gradcheck::{check_gradient, GradCheckOptions, GradCheckReport};
pub use init::{kaiming_uniform, prng, Prng};
pub use tensor::Tensor;
