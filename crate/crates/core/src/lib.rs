//! Low-rank tensor completion with a rank-efficient Frank-Wolfe solver over
//! circular unfoldings, and an online edge-caching pipeline built on it:
//! demand normalization, constrained linear prediction, most-popular
//! placement and per-slot hit-rate accounting.

pub mod caching;
pub mod completion;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod prediction;
pub mod tensor;

pub use error::{Error, Result};
