//! Hard instance families and exact-feedback query protocols for batch RL,
//! plus the spherical-cap geometry their sample-size thresholds rest on.

pub mod adversary;
pub mod baseline;
pub mod error;
pub mod finite_horizon;
pub mod geometry;
pub mod instances;
pub mod mdp;
pub mod online;
pub mod protocol;
pub mod sampling;
pub mod util;

pub use error::{Error, Result};

/// Dense column vector over f64; points, actions, and parameters all live here.
pub type Vector = nalgebra::DVector<f64>;

/// Dense matrix over f64.
pub type Matrix = nalgebra::DMatrix<f64>;
