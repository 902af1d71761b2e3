//! Numerical laboratory for intermittent interval maps with log-periodically
//! wobbling neutral fixed points and their semistable limit laws.

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod inducing;
pub mod maps;
pub mod montecarlo;
pub mod numeric;
pub mod rng;
pub mod semistable;
pub mod stats;

pub use error::{Error, Result};
pub use maps::{Branch, MapParams, MapSpec, Side, Variant};
