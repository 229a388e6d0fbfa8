pub mod amnn;
pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod datagen;
pub mod error;
pub mod evt;
pub mod fenchel;
pub mod flow;
pub mod metrics;
pub mod nn;
pub mod trainer;

pub use error::{Result, VieError};
