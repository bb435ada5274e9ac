pub mod analysis;
pub mod autodiff;
pub mod cli;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod metrics;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
