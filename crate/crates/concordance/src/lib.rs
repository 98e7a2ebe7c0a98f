//! File formats, parallel drivers, elicitation sessions, the HTTP service and
//! the command line on top of `concordance-core`.

pub mod api;
pub mod cli;
pub mod error;
pub mod fraction;
pub mod jobs;
pub mod ops;
pub mod parallel;
pub mod reproduce;
pub mod schema;
pub mod session;
pub mod table;

pub use error::{Error, Result};
