pub mod baselines;
pub mod design;
pub mod dists;
pub mod error;
pub mod fit;
pub mod gnari;
pub mod harness;
pub mod network;
pub mod ngnar;
pub mod optimize;

pub use error::{Error, Result};
