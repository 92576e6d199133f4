//! Desk-scale laboratory for learning with noisy labels.
//!
//! The crate is organised bottom-up:
//!
//! - [`netcore`]: a dense ReLU classifier with softmax output, exact
//!   backpropagation, an output Jacobian and a finite-difference oracle.
//! - [`noisegen`]: label-noise synthesis (symmetric, circular,
//!   instance-dependent, open-set replacement) and auxiliary pool
//!   construction (fixed labels, convex mixes).
//! - [`training`]: the training loop with pluggable objectives: plain cross
//!   entropy, open-set regularization with dynamic noisy labels (ODNL), SLN,
//!   Outlier Exposure, forward correction and co-teaching, each optionally
//!   composed with the ODNL term.
//! - [`analyzer`]: numerical checks of the gradient-noise identities and 2-D
//!   loss-landscape slices.
//! - [`oodeval`]: MSP scoring with FPR95, AUROC and AUPR.
//! - [`harness`]: synthetic data, config files, experiment orchestration.

pub mod analyzer;
pub mod error;
pub mod harness;
pub mod netcore;
pub mod noisegen;
pub mod oodeval;
pub mod rng;
pub mod training;

pub use error::{LabError, Result};
