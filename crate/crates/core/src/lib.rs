//! Streaming estimators for the frequency moment `F_p = sum_k |f_k|^p` with `p > 2`.
//!
//! Two estimators are provided: a one-pass estimator for insertion-only streams
//! that arrive in uniformly random order, and a two-pass estimator for arbitrary
//! order (insertion-only or turnstile). Both split the frequency vector into
//! geometric level sets and estimate each level from a subsampled substream.

pub mod config;
pub mod counthh;
pub mod error;
pub mod estimators;
pub mod format;
pub mod hashing;
pub mod levelsets;
pub mod sketches;
pub mod stats;
pub mod stream;
pub mod streamgen;

pub use config::{ConstantsMode, EstimatorConfig, UpperBound};
pub use error::{Error, Result};
pub use estimators::{Estimate, Phase, RandomOrderFpEstimator, SpaceReport, TwoPassFpEstimator};
pub use stream::{apply_stream, exact_f2_l2, exact_fp, FrequencyVector, StreamMeta, Update};
