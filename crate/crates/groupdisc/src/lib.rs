//! Quantifying how differently user-defined groups are spread over latent
//! response profiles.
//!
//! The workflow: encode survey or tabular responses as indicators
//! ([`dataset`]), fit a latent class model by EM ([`lca`]) with the class
//! count chosen by cross-validation ([`model_select`]), count each group's
//! members per class and compare the resulting profiles pairwise
//! ([`discrepancy`]). [`analysis`] validates the matrices against external
//! references, [`kmeans`] is a clustering baseline, and [`fairness`] relates
//! discrepancies to per-group false-positive rates of simple classifiers.
//! [`pipeline`] drives all stages from a run configuration file.

pub mod analysis;
pub mod dataset;
pub mod discrepancy;
pub mod error;
pub mod fairness;
pub mod kmeans;
pub mod lca;
pub mod model_select;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
