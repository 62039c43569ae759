pub mod channel;
pub mod error;
pub mod estimator;
pub mod fisher;
pub mod numkit;
pub mod report;
pub mod scenarios;
pub mod spectral;
pub mod suite;
pub mod sweep;

pub use error::{Error, Result};
