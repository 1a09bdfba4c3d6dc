//! Deep belief network toolkit for flow-based intrusion detection.
//!
//! Restricted Boltzmann machines trained with contrastive divergence are
//! stacked, pretrained greedily and fine-tuned as a feed-forward classifier.
//! Around the models sit flow-record preprocessing, class balancing and
//! multi-class evaluation.

pub mod balancing;
pub mod dataset;
pub mod dbn;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod mlp;
pub mod model;
pub mod net;
pub mod numerics;
pub mod pipeline;
pub mod rbm;
pub mod synthetic;

pub use dataset::Dataset;
pub use error::{Error, Result};
