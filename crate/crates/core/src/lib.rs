//! Heterogeneity metric and membership-inference simulation for tabular data.
//!
//! The crate measures how far apart two labeled datasets are (per-class
//! Gaussian proxies compared with the closed-form 2-Wasserstein distance) and
//! simulates a shadow-model membership inference attack against a model
//! trained with federated averaging, under configurable attacker / target /
//! non-member sampling.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod fedavg;
pub mod metric;
pub mod model;
pub mod rng;
pub mod splitting;

pub use error::{Error, ErrorKind, Result};
