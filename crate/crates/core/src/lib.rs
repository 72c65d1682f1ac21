//! Analysis engine for crowd-sourced direct assessment of open-domain dialogue systems.
//!
//! The statistics in [`statkit`] are generic over [`Scalar`] (`f32` or `f64`); the
//! domain layers work in `f64`. Aliases for both precisions live at the crate root.

pub mod autometrics;
pub mod degradation;
pub mod eventlog;
pub mod hit;
pub mod qc;
pub mod report;
pub mod scalar;
pub mod scoring;
pub mod simulator;
pub mod statkit;
pub mod types;

pub use scalar::Scalar;
pub use statkit::{Alternative, StatError, TestMethod};
pub use types::*;

pub type TestResult = statkit::TestResult<f64>;
pub type Summary = statkit::Summary<f64>;
pub type Standardized = statkit::Standardized<f64>;

pub type TestResultF32 = statkit::TestResult<f32>;
pub type SummaryF32 = statkit::Summary<f32>;
pub type StandardizedF32 = statkit::Standardized<f32>;
