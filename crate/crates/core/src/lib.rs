//! Digital financial literacy profiling and static policy-scenario simulation.
//!
//! The pipeline runs in three phases over cross-sectional survey microdata:
//! descriptive profiling of the competency index, leakage-safe training and
//! selection of a predictive model, and counterfactual re-prediction of
//! intervention scenarios built from the modifiable policy levers.

pub mod codebook;
pub mod competency;
pub mod dataset;
pub mod error;
pub mod fingerprint;
pub mod levers;
pub mod models;
pub mod pipeline;
pub mod profiling;
pub mod report;
pub mod scenario;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
