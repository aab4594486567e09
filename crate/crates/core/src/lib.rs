//! Chance-constrained trajectory planning for multi-vehicle linear systems
//! with unknown disturbance distributions.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod problem;
pub mod reformulation;
pub mod sampling;
pub mod solver;
pub mod validation;

pub use error::{Error, Result};
