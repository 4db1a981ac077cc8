//! Offline planning for speculative decoding on heterogeneous edge SoCs.
//!
//! Given latency profiles per (model, device configuration) and acceptance
//! traces per quantization pair, decide whether speculative decoding pays off,
//! which draft length to use, and how to map drafter and target onto the
//! processing units. A Monte Carlo simulator of the draft-verify loop checks
//! the closed-form predictions.

pub mod acceptance;
pub mod cli;
pub mod cost_model;
pub mod design_space;
pub mod error;
pub mod planner;
pub mod profiles;
pub mod simulator;
pub mod toy_models;

pub use error::{Error, Result};
