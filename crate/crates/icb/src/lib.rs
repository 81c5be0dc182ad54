//! Input-compression generalization bounds for infinite ensembles of
//! infinite-width fully-connected networks.
//!
//! The pipeline: build NNGP/NTK Gram matrices for a binary task
//! ([`kernels`]), run the analytic gradient-descent dynamics of the ensemble
//! to obtain per-point predictive Gaussians ([`dynamics`]), estimate upper
//! and lower bounds on the mutual information I(X;Z) between inputs and the
//! ensemble output ([`infometrics`]), and turn the upper bound into a
//! high-probability bound on the train/test accuracy gap ([`bound`]).
//! [`eval`] measures the realized gaps (clean, noise-perturbed, and
//! gradient-attacked) and rank statistics; [`harness`] drives metaparameter
//! sweeps and writes deterministic CSV records.

pub mod bound;
pub mod datasets;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod harness;
pub mod infometrics;
pub mod kernels;
pub mod rng;

pub use error::{Error, Result};
