//! Kernel hypothesis testing built around a norm-adaptive variant of the
//! maximum mean discrepancy.
//!
//! The crate provides:
//!
//! * bounded kernels and Gram-matrix computation ([`kernels`]),
//! * U-statistics for the squared MMD, the embedding-norm term, and their
//!   ratio, with variance components and exact discrete/Gaussian
//!   evaluators ([`estimators`]),
//! * distribution closeness tests with asymptotic thresholds, plus a
//!   count-based total-variation baseline ([`dct`]),
//! * permutation two-sample tests, including a multi-kernel soft-maximum
//!   statistic ([`tst`]),
//! * kernel-parameter selection by gradient ascent on the test-power
//!   t-statistic ([`selection`]),
//! * synthetic distribution constructions used by the experiments
//!   ([`synthesis`]),
//! * a seeded, parallel experiment harness with CSV/JSON output
//!   ([`harness`]).

pub mod dct;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod kernels;
pub mod selection;
pub mod synthesis;
pub mod tst;

pub use error::{Error, Result};
pub use kernels::{GramBlock, KernelFamily, KernelSpec, Matrix, Sample};
