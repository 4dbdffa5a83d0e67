//! Check loss and its Gaussian convolution-smoothed counterpart.
//!
//! With `k` the standard normal density and `k_h(v) = k(v/h)/h`, the smoothed
//! loss `l_h(u) = ∫ rho_tau(v) k_h(v - u) dv` has the closed form
//! `tau*u - u*Phi(-u/h) + h*phi(u/h)`, and `d/du l_h(u) = tau - Phi(-u/h)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FlqrError, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Smoothing kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

/// Smoothing kernel with its bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothKernel {
    pub family: KernelFamily,
    bandwidth: f64,
}

impl SmoothKernel {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(SmoothKernel {
            family: KernelFamily::Gaussian,
            bandwidth,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn loss(&self, u: f64, tau: f64) -> Result<f64> {
        smoothed_loss(u, tau, self.bandwidth)
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(FlqrError::DomainError(format!(
            "normal quantile needs p in (0, 1), got {p}"
        )));
    }
    Ok(Normal::standard().inverse_cdf(p))
}

/// Two-sided critical value `z_{xi/2}` for a `level = 1 - xi` interval.
pub fn two_sided_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(FlqrError::DomainError(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    norm_quantile(0.5 + 0.5 * level)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(FlqrError::DomainError(format!(
            "tau must lie in (0, 1), got {tau}"
        )))
    }
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(FlqrError::DomainError(format!(
            "bandwidth must be positive and finite, got {h}"
        )))
    }
}

/// `rho_tau(u) = u (tau - 1{u < 0})`.
pub fn check_loss(u: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(check_loss_unchecked(u, tau))
}

#[inline]
pub(crate) fn check_loss_unchecked(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// CDF of the smoothing kernel (standard normal).
pub fn kbar(v: f64) -> f64 {
    norm_cdf(v)
}

/// Gaussian-smoothed check loss `l_h(u; tau)`.
pub fn smoothed_loss(u: f64, tau: f64, h: f64) -> Result<f64> {
    check_tau(tau)?;
    check_bandwidth(h)?;
    Ok(smoothed_loss_unchecked(u, tau, h))
}

#[inline]
pub(crate) fn smoothed_loss_unchecked(u: f64, tau: f64, h: f64) -> f64 {
    let z = u / h;
    // For u < 0 rewrite -u*Phi(-z) as -u + u*Phi(z) to avoid cancellation.
    if u >= 0.0 {
        tau * u - u * norm_cdf(-z) + h * norm_pdf(z)
    } else {
        (tau - 1.0) * u + u * norm_cdf(z) + h * norm_pdf(z)
    }
}

/// `d/du l_h(u; tau) = tau - Kbar(-u/h)`.
///
/// With `u` a residual `Y - fit`, the derivative of the loss with respect to
/// the fitted value is the negation, [`residual_score`].
pub fn smoothed_loss_derivative(u: f64, tau: f64, h: f64) -> Result<f64> {
    check_tau(tau)?;
    check_bandwidth(h)?;
    Ok(tau - kbar(-u / h))
}

/// `Kbar(-u/h) - tau`: derivative of `l_h(Y - fit)` with respect to the fit.
#[inline]
pub fn residual_score(u: f64, tau: f64, h: f64) -> f64 {
    norm_cdf(-u / h) - tau
}
