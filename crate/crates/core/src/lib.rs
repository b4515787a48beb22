//! No-show risk scoring: data preparation, three model families,
//! relevance explanations, and intervention-group tuning.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod explain;
pub mod forest;
pub mod linear;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod strategy;
pub mod synth;

pub use error::{Error, Result};
