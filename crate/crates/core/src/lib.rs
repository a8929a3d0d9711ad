//! Poisson multi-Bernoulli mixture trackers for sets of trajectories.

pub mod assignment;
pub mod association;
pub mod config;
pub mod density;
pub mod estimation;
pub mod experiment;
pub mod error;
pub mod gaussian;
pub mod logmath;
pub mod metrics;
pub mod models;
pub mod par;
pub mod predict;
pub mod simulator;
pub mod tracker;
pub mod trajectory;
pub mod update;

pub use error::{Error, Result};
