pub mod cli;
pub mod error;
pub mod feed;
pub mod metrics;
pub mod pricer;
pub mod pricing;
pub mod vector;

pub use error::{Error, Result};
