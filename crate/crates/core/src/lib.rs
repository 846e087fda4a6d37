//! Numerical lab for weak convergence of stochastic integrals under
//! perturbations of both integrand and driving noise.

pub mod claw;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod ito;
pub mod lab;
pub mod mollify;
pub mod processes;
pub mod report;
pub mod rng;
pub mod run;
pub mod stats;
pub mod translation;
pub mod transport;
pub mod wiener;

pub use error::{Error, Result};
