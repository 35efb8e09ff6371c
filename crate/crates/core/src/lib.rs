//! Numerics on the 2-Wasserstein space and pathwise checks of Itô–Wentzell–Lions
//! chain rules for random fields along full and conditional measure flows.

pub mod chain;
pub mod error;
pub mod functional;
pub mod harness;
pub mod linalg;
pub mod lions;
pub mod model;
pub mod sde;
pub mod suites;

pub use error::{Error, Result};
