pub mod config;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod nn;
pub mod numeric;
pub mod reverb;
pub mod train;
pub mod verify;

pub use error::{Error, ErrorCategory, Result};
