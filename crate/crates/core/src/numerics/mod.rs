//! Dense matrices, seeded random streams, activations and initialisers.
//!
//! All model arithmetic is `f64`.

mod activation;
mod matrix;
mod rng;

pub use activation::{
    bernoulli_sample, log_sum_exp, relu, sigmoid, sigmoid_scalar, softmax, softmax_rows,
    xavier_bound, xavier_init,
};
pub use matrix::{dot, Matrix};
pub use rng::Rng;
