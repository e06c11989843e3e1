//! Threshold dynamics for nonlocal diffusion of smooth sets.
//!
//! The crate evaluates the convolution of a signed set indicator with a family of
//! fractional kernels, thresholds it, and measures the resulting interface velocity
//! against curvature predictions.

pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod mbo;
pub mod scaling;
pub mod velocity;
pub mod numerics;

pub use error::{Error, Result};
