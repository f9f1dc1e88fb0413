//! Gaussian clouded logit (GCL) losses for long-tailed classification.
//!
//! The crate covers the whole desk-scale workflow:
//!
//! - [`datagen`]: exponentially imbalanced class profiles, synthetic data and CSV datasets
//! - [`schedules`]: per-class cloud sizes (logarithmic, power, cosine)
//! - [`sampling`]: instance, square-root, class-balanced and effective-number samplers
//! - [`losses`]: GCL-E, GCL-A and the baseline margin losses with exact gradients
//! - [`model`]: a small MLP backbone with a cosine classifier and momentum SGD
//! - [`pipeline`]: two-stage training (representation, then classifier retraining),
//!   evaluation, checkpoints
//! - [`gradcheck`]: finite-difference verification of every loss family
//! - [`cli`]: the `gcl` command-line front end

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod datagen;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod pipeline;
pub mod sampling;
pub mod schedules;

pub use error::{Error, Result};
