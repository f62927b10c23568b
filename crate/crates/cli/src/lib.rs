//! Configuration-driven pipeline around `optdesign`: solve for the optimal
//! product design, sparsify it, round it and emit figure data.

pub mod config;
pub mod design_file;
pub mod error;
pub mod pipeline;
pub mod report;

pub use error::{CliError, Result};
pub use pipeline::Pipeline;
