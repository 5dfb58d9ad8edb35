//! Large-MIMO data detection with approximate message passing under
//! transmit-side hardware impairments.
//!
//! The crate provides the impairment-aware detector and two baselines,
//! its scalar state-evolution analysis with recovery thresholds, and a
//! seeded Monte Carlo symbol-error-rate harness.

pub mod constellation;
pub mod denoiser;
pub mod detector;
pub mod error;
pub mod harness;
pub mod impairment;
pub mod random;
pub mod simulation;
pub mod state_evolution;

pub use constellation::{Constellation, StandardConstellation};
pub use error::{Error, Result};
pub use num_complex::Complex64;
