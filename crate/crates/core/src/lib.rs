//! Fairness-aware federated active learning under class imbalance.
//!
//! The numeric core is generic over [`scalar::Scalar`]; the aliases below fix
//! the common precisions. The experiment harness works in `f64`.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod fairfal;
pub mod federation;
pub mod harness;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod strategies;

pub use error::{Error, Result};

pub type Dataset64 = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type ModelParams32 = model::ModelParams<f32>;
pub type LearningCurve64 = eval::LearningCurve<f64>;
pub type PairedStats64 = eval::PairedStats<f64>;
