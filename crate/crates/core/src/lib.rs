//! Masked-model detection, isolation, and accommodation of sensor faults
//! and false-data injections.
//!
//! One masked reconstruction model is trained by randomly hiding sensor
//! channels and reconstructing them from the remaining channels plus a
//! mask-indicator input. At run time the same model is applied once per
//! protected channel: a large reconstruction residual flags the channel,
//! and the reconstruction itself replaces the flagged measurement. The
//! crate also ships the two baseline formulations (auto-regressive and
//! auto-associative), a correlated synthetic plant for end-to-end checks,
//! fault injectors, and threshold-free evaluation metrics.

pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod faults;
pub mod fdia;
pub mod masking;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use exec::ExecMode;
