//! Dense tensor arithmetic with reverse-mode automatic differentiation and
//! the RMSprop optimizer.
//!
//! The primitive set is exactly what the forecasting models need: matrix
//! multiply, elementwise add/sub/mul, bias broadcast, concatenation, gather
//! and scatter-add over a row index, sigmoid/tanh/relu, sum-reduce, scaling
//! and reshape. Everything computes in f64.

mod gradcheck;
mod kernels;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use optim::{rmsprop_step, RmspropConfig, RmspropState};
pub use tape::{backward, Gradients, IndexVec, Tape};
pub use tensor::{mse_loss, Tensor};
