//! Simulation-based inference engine.
//!
//! Neural posterior (NPE), likelihood (NLE) and ratio (NRE) estimation on top of a
//! small reverse-mode autodiff substrate, with MCMC/rejection/importance samplers
//! and calibration diagnostics (SBC, expected coverage, TARP, C2ST).
//!
//! The usual pipeline:
//!
//! 1. define a prior ([`distributions::Distribution`]) and a [`simgym::Simulator`];
//! 2. run [`simgym::simulate_for_sbi`] and [`simgym::SimulationBatch::filter_valid`];
//! 3. train with [`inference::InferenceMethod::train_amortized`];
//! 4. condition on an observation with [`inference::InferenceMethod::build_posterior`]
//!    and draw samples;
//! 5. check calibration with the [`diagnostics`] module.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]

pub mod cli;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod linalg;
pub mod neural;
pub mod rng;
pub mod samplers;
pub mod simgym;

pub use error::{Result, SbiError};
