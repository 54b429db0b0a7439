//! Federated dead-band filtering for sensor fleets.
//!
//! Devices run a lightweight LMS predictor and transmit only when the live
//! sample drifts out of a dead-band around the prediction; a fog server
//! mirrors every predictor bit-for-bit, averages the shared models into a
//! fleet-wide predictor, and solves the dead-band that keeps the expected
//! eigenvalue perturbation of the reconstructed data matrix inside a
//! global budget.
//!
//! The crate is organized around that pipeline:
//!
//! - [`lms`]: tap-delay prediction, Widrow-Hoff training, step-size bound
//! - [`perturbation`]: covariance/eigenvalue machinery, the perturbation
//!   budget and its closed-form dead-band inverse
//! - [`device`]: the per-device suppress-or-retrain protocol
//! - [`fog`]: update handling, model averaging, budget monitoring
//! - [`dataset`]: log ingestion, partitioning, the synthetic generator
//! - [`sim`]: the tick-driven experiment loop, metrics, sweep drivers
//! - [`validate`]: the built-in invariant suite behind `validate`

pub mod dataset;
pub mod device;
pub mod error;
pub mod fog;
pub mod lms;
pub mod perturbation;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
