//! Sampling quantum channels with Hamiltonian Monte Carlo over an exact angle
//! parameterization of the CPTP set, and Bayesian tomography on top of it.

pub mod cptp_param;
pub mod duality;
pub mod error;
pub mod family;
pub mod fit;
pub mod fixtures;
pub mod hmc;
pub mod linalg;
pub mod marginal;
pub mod model_select;
pub mod optim;
pub mod regions;
pub mod target;
pub mod tomo;
pub mod unital_qubit;

pub use error::{Error, Result};
