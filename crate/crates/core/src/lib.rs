//! Joint channel estimation and user grouping for multi-user massive MIMO
//! downlink training, built on variational sparse Bayesian learning.
//!
//! The crate is organised bottom-up: [`steering`] builds array responses and
//! angular dictionaries, [`channel`] draws grouped clustered channels and
//! noisy pilot observations, [`vbi`] runs the inference engine, [`offgrid`]
//! refines dictionary angles, [`baselines`] holds the reference recoverers
//! and [`harness`] drives seeded Monte Carlo experiments.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod offgrid;
pub mod special;
pub mod steering;
pub mod vbi;

pub use error::{Error, Result};
