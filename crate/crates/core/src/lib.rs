//! Synchronous federated learning simulator.
//!
//! A coordinator broadcasts a global model, every simulated center trains it
//! locally and reports back its parameters, sample count and post-training
//! cost, and the coordinator averages the returned models. Two averaging
//! rules are provided:
//!
//! * **FedAvg** weights each center by its share of the training samples.
//! * **FedCostWAvg** mixes that share with the center's relative cost
//!   improvement since the previous round, `k_j = c_prev / c_curr`:
//!   `w_j = alpha * s_j / S + (1 - alpha) * k_j / K`.
//!
//! An experimental windowed variant (`FedCostWIntAvg`) averages `k_j` over
//! the last few rounds before applying the same mix.
//!
//! The crate ships small models with analytic gradients, synthetic non-IID
//! data, a binary wire protocol with in-process and TCP transports, and an
//! experiment runner that writes plot-ready CSV.

pub mod aggregation;
pub mod cli;
pub mod config;
pub mod data;
mod error;
pub mod federation;
pub mod metrics;
pub mod models;
pub mod params;
pub mod seed;
pub mod transport;

pub use aggregation::{
    aggregate, cost_ratios, fedavg_weights, fedcostwavg_weights, fedcostwintavg_weights,
    ClientUpdate, CostHistory, StrategyConfig, StrategyKind, WeightVector,
};
pub use error::{Error, Result};
pub use params::ParamVector;
