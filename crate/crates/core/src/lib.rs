//! Path-measure laboratory for transient fluctuation theorems of driven
//! Markov jump processes.

pub mod birthdeath;
pub mod config;
pub mod enumerate;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod numeric;
pub mod path;
pub mod process;
pub mod sampler;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
