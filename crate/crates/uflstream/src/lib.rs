//! Streaming estimation of the uniform facility location cost for point sets
//! in `[Δ]^d` given as insertion/deletion streams.

pub mod core;
pub mod estimators;
pub mod error;
pub mod harness;
pub mod hashing;
pub mod oracle;
pub mod prf;
pub mod sketch;

pub use error::{Error, Result};
