pub mod baselines;
pub mod density;
pub mod error;
pub mod experiment;
pub mod indicators;
pub mod io;
pub mod nn;
pub mod pareto;
pub mod problems;
pub mod rewards;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
