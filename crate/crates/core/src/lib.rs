//! Simulation and verification of Heckman-Opdam diffusions of type A
//! (compact and non-compact) and type BC, together with their deterministic
//! freezing limits.
//!
//! The crate is organised bottom-up: [`symfunc`] evaluates elementary
//! symmetric polynomials, [`models`] holds the process families and their
//! drift fields, [`generator`] applies the generators numerically, [`sde`]
//! and [`ode`] integrate paths, and [`verify`] compares Monte Carlo
//! estimates with closed-form predictions.

pub mod convention;
pub mod error;
pub mod format;
pub mod generator;
pub mod models;
pub mod ode;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod symfunc;
pub mod verify;

pub use convention::Convention;
pub use error::{Error, Result};
pub use models::{Configuration, Coupling, Kind, ModelSpec, Partition};
pub use sde::{Execution, PathSample, SdeConfig};
pub use stats::McEstimate;
