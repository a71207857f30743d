//! Lambertian stochastic billiards in thin annular tubes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod error;
pub mod export;
pub mod geometry;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
