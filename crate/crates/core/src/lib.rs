//! Simulation and classification tools for coordinated particle systems:
//! multi-site Λ-coalescents with coordinated death, migration and
//! reproduction driven by finite measures on `[0, 1]`.
//!
//! The numeric kernels ([`measures`], [`rates`], [`quadrature`], [`special`],
//! [`bounds`]) are generic over [`Real`]; everything stochastic works in `f64`.

pub mod bounds;
pub mod config;
pub mod criteria;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod measures;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod special;
pub mod system;

pub use error::{Error, Result};
pub use scalar::Real;
pub use system::{InitialCount, SystemSpec};

/// Double precision measure.
pub type Measure = measures::MeasureSpec<f64>;
pub type Density = measures::DensityFamily<f64>;
pub type Profile = measures::RegularityProfile<f64>;
pub type Losses = rates::LossDistribution<f64>;
