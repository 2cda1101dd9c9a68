pub mod cli;
pub mod contextual;
pub mod env;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod policy;
pub mod prior_fit;
pub mod rng;

pub use error::{Error, Result};
