pub mod config;
pub mod error;
pub mod experiment;
pub mod levy;
pub mod lyapunov;
pub mod paths;
pub mod plot;
pub mod sde;
pub mod stability;

pub use error::{Error, Result};
