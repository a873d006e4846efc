//! Dense arrays, linear algebra, reverse-mode gradients and Adam.

mod graph;
mod linalg;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use linalg::{cholesky, solve_lower, solve_lower_t, DEFAULT_JITTER};
pub use params::{adam_step, grad, grad_check, value, ParamStore, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tensor::{Scalar, Tensor};
