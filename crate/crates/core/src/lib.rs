pub mod active;
pub mod benchgen;
pub mod dataset;
pub mod disentangle;
pub mod encoders;
pub mod error;
pub mod ferrosim;
pub mod gp;
pub mod numcore;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};

/// Double-precision aliases.
pub type Tensor = numcore::Tensor<f64>;
pub type ParamStore = numcore::ParamStore<f64>;
pub type Graph = numcore::Graph<f64>;
pub type ModelState = trainer::ModelState<f64>;
pub type TrainOutcome = trainer::TrainOutcome<f64>;
pub type NormalizationStats = encoders::NormalizationStats<f64>;
