//! Convolution-smoothed functional linear quantile regression.
//!
//! A scalar response `Y` is modelled through its conditional quantiles
//! `Q(τ | X) = α(τ) + ∫ X(t) β(t, τ) dt` with the slope `β(·, τ)` in the
//! second-order Sobolev space. The check loss is replaced by its Gaussian
//! convolution so that the penalized objective is smooth, the representer
//! theorem reduces it to `n + m + 1` coordinates, and gradient descent with
//! Barzilai-Borwein steps fits it. On top of the fit the crate provides
//! quantile monotonization, pointwise confidence intervals, simultaneous
//! confidence bands, conditional-quantile intervals and a Monte Carlo harness.

pub mod error;
pub mod estimator;
pub mod funcdata;
pub mod inference;
pub mod monotonize;
pub mod optimizer;
pub mod rkhs;
pub mod simharness;
pub mod smoothing;
pub mod spectrum;
pub mod stats;
pub mod tuning;

pub use error::{FlqrError, Result};
