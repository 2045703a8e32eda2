//! Numerical radius, numerical index and the projection-modified index on
//! finite mixed-exponent ℓ_p-sum towers.

pub mod duality;
pub mod error;
pub mod harness;
pub mod index;
pub mod numerical_range;
pub mod operators;
pub mod optim;
pub mod rng;
pub mod tower;

pub use error::{Error, Result};
