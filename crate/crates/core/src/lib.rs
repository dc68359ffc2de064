//! Recover the parameters of a sigmoid superposition by tracking it with an
//! adaptively tuned ensemble of logistic ODEs.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod io;
pub mod model;

pub use error::{DivergenceError, SimError, ValidationError};
