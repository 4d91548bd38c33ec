// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset-adaptive noise schedules for time-series diffusion models.
//!
//! Candidate schedules are scored by corrupting a dataset under each one,
//! tracking how an autocorrelation statistic decays over the diffusion
//! steps, and measuring how close that decay is to a straight line
//! ([`ant`]). A small noise-prediction network ([`denoiser`]) and the
//! [`experiments`] module exercise the reverse process.

pub mod ant;
pub mod cli;
pub mod dataset;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod par;
pub mod plot;
pub mod schedule;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
