//! Counter-diabatic measurement drives for dispersively coupled cavity networks.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod measurement;
pub mod network;
pub mod pipeline;
pub mod poly;
pub mod signal;
pub mod synthesis;

pub use error::{Error, Result};
