//! Fit and predict at one or several quantile levels.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};
use crate::funcdata::{inner_l2, FunctionalSample, Grid, GridFunction};
use crate::optimizer::{minimize_theta, standard_init, FitTrace, GdConfig, QuantileProblem, Theta};
use crate::rkhs::{build_gram, RepresenterGram, SobolevKernel};
use crate::smoothing::norm_pdf;
use crate::stats;
use crate::tuning::{cross_validate_gram, rot_bandwidth_gram, CvTable, TuningConfig};

/// Lower bound on the sparsity estimate.
pub const SPARSITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitConfig {
    #[serde(default)]
    pub gd: GdConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
}

/// A fitted conditional-quantile model at one `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub tau: f64,
    pub theta: Theta,
    pub lambda: f64,
    pub h: f64,
    pub beta_hat: GridFunction,
    pub alpha_hat: f64,
    /// `Y_i - α̂ - ∫X_i β̂`.
    pub residuals: Vec<f64>,
    /// Estimate of the error density at its `τ`-quantile.
    pub b_hat: f64,
    pub trace: FitTrace,
    /// Present when `λ` was chosen by cross-validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cv: Option<CvTable>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.beta_hat.grid()
    }

    /// `β̂` as CSV with columns `t,value`.
    pub fn beta_csv(&self) -> String {
        let mut s = String::from("t,value\n");
        for (t, v) in self.grid().points().iter().zip(self.beta_hat.values()) {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }
}

/// Gaussian-KDE estimate of the residual density at the residual `τ`-quantile.
///
/// Silverman bandwidth `0.9 min(SD, IQR/1.34) n^{-1/5}`; the result is
/// floored at [`SPARSITY_FLOOR`].
pub fn estimate_sparsity(residuals: &[f64], tau: f64) -> f64 {
    let n = residuals.len();
    if n < 2 {
        return SPARSITY_FLOOR;
    }
    let spread = stats::std_dev(residuals).min(stats::iqr(residuals) / 1.34);
    let bw = 0.9 * spread * (n as f64).powf(-0.2);
    if !(bw > 0.0 && bw.is_finite()) {
        return SPARSITY_FLOOR;
    }
    let q = stats::quantile(residuals, tau);
    let dens = residuals.iter().map(|r| norm_pdf((q - r) / bw)).sum::<f64>() / (n as f64 * bw);
    dens.max(SPARSITY_FLOOR)
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(FlqrError::DomainError(format!("tau must lie in (0, 1), got {tau}")))
    }
}

/// Fits at `τ`; `h` defaults to the rule of thumb and `λ` to cross-validation.
pub fn fit(
    sample: &FunctionalSample,
    tau: f64,
    h: Option<f64>,
    lambda: Option<f64>,
    config: &FitConfig,
) -> Result<FitResult> {
    let kern = SobolevKernel::cubic(sample.grid().clone())?;
    let gram = build_gram(sample, &kern)?;
    fit_gram(sample, &gram, tau, h, lambda, config, None)
}

/// [`fit`] on a prebuilt Gram, optionally from a given initial point.
pub fn fit_gram(
    sample: &FunctionalSample,
    gram: &RepresenterGram,
    tau: f64,
    h: Option<f64>,
    lambda: Option<f64>,
    config: &FitConfig,
    init: Option<&Theta>,
) -> Result<FitResult> {
    check_tau(tau)?;
    if gram.n() != sample.n() {
        return Err(FlqrError::DimensionMismatch(format!(
            "gram has {} curves, sample has {}",
            gram.n(),
            sample.n()
        )));
    }
    let y = sample.responses();
    let h = match h {
        Some(h) => h,
        None => rot_bandwidth_gram(gram, y, tau)?,
    };
    let (lambda, cv) = match lambda {
        Some(l) => (l, None),
        None => {
            let (l, table) = cross_validate_gram(gram, y, tau, h, &config.tuning)?;
            (l, Some(table))
        }
    };
    let problem = QuantileProblem::new(gram, y, tau, h, lambda)?;
    let start = match init {
        Some(t) => t.clone(),
        None => standard_init(y, gram.m(), tau),
    };
    let (theta, trace) = minimize_theta(&problem, &start, &config.gd)?;
    assemble(sample, gram, tau, h, lambda, theta, trace, cv)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    sample: &FunctionalSample,
    gram: &RepresenterGram,
    tau: f64,
    h: f64,
    lambda: f64,
    theta: Theta,
    trace: FitTrace,
    cv: Option<CvTable>,
) -> Result<FitResult> {
    let beta_hat = GridFunction::new(sample.grid().clone(), gram.assemble_beta(&theta.d, &theta.c))?;
    let fitted = crate::rkhs::weighted_curves(sample) * DVector::from_column_slice(beta_hat.values());
    let residuals: Vec<f64> = (0..sample.n())
        .map(|i| sample.responses()[i] - theta.alpha - fitted[i])
        .collect();
    let b_hat = estimate_sparsity(&residuals, tau);
    Ok(FitResult {
        tau,
        alpha_hat: theta.alpha,
        theta,
        lambda,
        h,
        beta_hat,
        residuals,
        b_hat,
        trace,
        cv,
    })
}

/// `Q̂(τ | x) = α̂ + ∫ x β̂`.
pub fn predict(fit: &FitResult, x: &GridFunction) -> Result<f64> {
    Ok(fit.alpha_hat + inner_l2(x, &fit.beta_hat)?)
}

/// Per-`τ` fits, not yet monotonized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantileCurveFamily {
    pub taus: Vec<f64>,
    /// `None` where the fit at that `τ` failed.
    pub fits: Vec<Option<FitResult>>,
    pub failures: Vec<(f64, String)>,
    pub monotone: bool,
}

impl QuantileCurveFamily {
    /// Predictions at `x` for the successful levels, as `(τ, Q̂)` pairs.
    pub fn predict_path(&self, x: &GridFunction) -> Result<Vec<(f64, f64)>> {
        self.taus
            .iter()
            .zip(&self.fits)
            .filter_map(|(t, f)| f.as_ref().map(|f| predict(f, x).map(|q| (*t, q))))
            .collect()
    }
}

/// Checks that `taus` is strictly increasing inside `(0, 1)`.
pub fn validate_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(FlqrError::InvalidTauGrid("no quantile levels".into()));
    }
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
        return Err(FlqrError::InvalidTauGrid(format!("level {t} outside (0, 1)")));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FlqrError::InvalidTauGrid("levels must be strictly increasing without duplicates".into()));
    }
    Ok(())
}

/// Independent fits at each `τ`, in parallel.
///
/// With `shared_lambda`, `λ` is cross-validated once at the level closest to
/// `0.5` and reused for the others. Fails only when every level fails.
pub fn fit_family(
    sample: &FunctionalSample,
    taus: &[f64],
    lambda: Option<f64>,
    shared_lambda: bool,
    config: &FitConfig,
) -> Result<QuantileCurveFamily> {
    validate_taus(taus)?;
    let kern = SobolevKernel::cubic(sample.grid().clone())?;
    let gram = build_gram(sample, &kern)?;
    let lambda = match (lambda, shared_lambda) {
        (Some(l), _) => Some(l),
        (None, true) => {
            let mid = taus
                .iter()
                .copied()
                .min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()))
                .expect("nonempty taus");
            let h = rot_bandwidth_gram(&gram, sample.responses(), mid)?;
            Some(cross_validate_gram(&gram, sample.responses(), mid, h, &config.tuning)?.0)
        }
        (None, false) => None,
    };
    let results: Vec<Result<FitResult>> = taus
        .par_iter()
        .map(|&tau| fit_gram(sample, &gram, tau, None, lambda, config, None))
        .collect();
    let mut fits = Vec::with_capacity(taus.len());
    let mut failures = Vec::new();
    for (tau, r) in taus.iter().zip(results) {
        match r {
            Ok(f) => fits.push(Some(f)),
            Err(e) => {
                log::warn!("fit at tau = {tau} failed: {e}");
                failures.push((*tau, e.to_string()));
                fits.push(None);
            }
        }
    }
    if fits.iter().all(Option::is_none) {
        return Err(FlqrError::InvalidInput(format!(
            "every quantile level failed: {}",
            failures.iter().map(|(t, e)| format!("tau {t}: {e}")).collect::<Vec<_>>().join("; ")
        )));
    }
    Ok(QuantileCurveFamily {
        taus: taus.to_vec(),
        fits,
        failures,
        monotone: false,
    })
}
