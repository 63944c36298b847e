//! Feedback-capacity lower bounds for parallel Gaussian channels with
//! colored, correlated noise, and the recursive linear coding schemes that
//! achieve them.
//!
//! Start from [`noise::ArmaNoise`], call [`capacity::solve`], then
//! [`coding::synthesize`] and [`coding::verify_result`].

pub mod capacity;
pub mod cli;
pub mod coding;
pub mod config;
pub mod error;
pub mod kalman;
pub mod linalg;
pub mod noise;
pub mod tol;

pub use error::{Error, Result};
