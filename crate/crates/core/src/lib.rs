//! Rényi α-divergence variational inference followed by a smoothed rejection
//! sampler that refines the fitted proposal.
//!
//! Stage 1 ([`rdvi`]) fits `q_θ` by minimizing a Monte-Carlo α-divergence
//! objective. Stage 2 ([`drs`]) accepts draws from `q_θ` with a logistic
//! acceptance probability governed by a threshold `T`, producing samples from
//! the refined law `r ∝ q_θ·a(·|T)`. [`divergence`] holds the estimators used
//! to check that the refinement does not increase `D_α`.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bnn;
pub mod cli;
pub mod distributions;
pub mod divergence;
pub mod drs;
pub mod error;
pub mod numerics;
pub mod rdvi;
pub mod streams;

pub use distributions::{make_gmm_target, Family, GmmSpec, SampleMatrix, TargetDensity, VariationalDist};
pub use divergence::{DivergenceEstimate, KlDirection, WeightedBatch};
pub use drs::{RefinedSampleSet, RefinementConfig, ThresholdRule};
pub use error::{Error, Result};
pub use rdvi::{FitTrace, OptimizerConfig};
