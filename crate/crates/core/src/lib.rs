//! Physics-informed yield-loss modelling.
//!
//! FAO-56 simulation of maximum evapotranspiration, an LSTM that learns
//! per-timestep actual evapotranspiration and yield response factors under a
//! physics-constrained loss, and a grouped cross-validation harness.

pub mod dataset;
pub mod loss;
pub mod model;
pub mod fao56;
pub mod harness;
pub mod tensor;
