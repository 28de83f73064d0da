//! Differentiable-function and linear-algebra substrate.

pub mod linalg;
pub mod mlp;
pub mod optim;
pub mod rng;

pub use linalg::{cholesky_solve, Cholesky};
pub use mlp::{Activation, Mlp, Trace};
pub use optim::{Adam, AdamConfig, Optimizer};
pub use rng::Rng;
