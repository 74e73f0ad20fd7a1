//! Approximate Nash social welfare for XOS valuations.

pub mod capped_welfare;
pub mod error;
pub mod exact;
pub mod gadgets;
pub mod generate;
pub mod io;
pub mod matching;
pub mod moving_knife;
pub mod numeric;
pub mod rng;
pub mod solver;
pub mod suites;
pub mod valuations;

pub use error::{Error, Result};
