//! Change detection for optical-amplifier telemetry.
//!
//! The crate composes a cleaning and standardization step, entropy-based
//! feature selection, PCA feature extraction and three fuzzy clustering
//! procedures (fuzzy c-means, robust probabilistic and robust possibilistic
//! clustering) into a pipeline that flags pump-current drift in EDFA
//! telemetry streams. Classical baselines (k-means, agglomerative, BIRCH),
//! a synthetic telemetry generator and the experiment drivers used by the
//! `cdf` command-line tool live alongside.

pub mod baselines;
pub mod benchmark;
pub mod cli;
pub mod clustering;
pub mod detection;
pub mod error;
pub mod feature_extract;
pub mod feature_select;
pub mod pipeline;
pub mod preprocess;
pub mod telemetry;

pub use error::{CdfError, Result};
pub use telemetry::FeatureMatrix;
