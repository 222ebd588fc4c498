//! Simulation of the transitory single-server queue with heavy-tailed
//! service times, its heavy-traffic scaling, and the reflected stable limit.

pub mod arrivals_poisson;
pub mod cli;
pub mod distributions;
pub mod error;
pub mod limit_process;
pub mod paths;
pub mod queue_sim;
pub mod scaling;
pub mod stats;

pub use error::{Error, Result};
