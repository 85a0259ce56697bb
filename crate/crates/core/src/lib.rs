//! Simulation, attack generation, and detection toolkit for stealthy false
//! data injection against power-system state estimation under transmission
//! line modeling errors.
//!
//! The crate is organized around the data path of the detection problem:
//!
//! - [`grid`]: case model, validation, parameter perturbation
//! - [`powerflow`]: Newton-Raphson AC power flow and the measurement function
//! - [`estimation`]: WLS state estimation and residual-based bad data detection
//! - [`attack`]: stealthy injection vectors that preserve the residual
//! - [`dataset`]: labeled source/target/test dataset generation and storage
//! - [`nn`]: from-scratch dense network with batch norm and hand-derived gradients
//! - [`transfer`]: two-stage pre-train / fine-tune pipeline
//! - [`baselines`]: comparison detectors (BDD, LR, KNN, GNB, DNN-B)
//! - [`eval`]: metrics, scenario sweeps, and report emission

pub mod attack;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod grid;
pub mod nn;
pub mod powerflow;
pub mod seed;
pub mod transfer;

pub use error::{Error, ErrorCategory, Result};
