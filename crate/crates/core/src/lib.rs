//! Dual methods with primal recovery for network utility maximization.

pub mod distributed;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod problem;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
