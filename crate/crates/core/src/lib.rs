pub mod baselines;
pub mod cli;
pub mod error;
pub mod features;
pub mod harness;
pub mod labeling;
pub mod learner;
pub mod seed;
pub mod simulator;

pub use error::{Error, Result};
