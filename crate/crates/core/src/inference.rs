//! Pointwise intervals for `β(t, τ)`, simultaneous bands and intervals for
//! conditional quantiles.
//!
//! All widths come from the eigen-system of `(V, J)`. With `n` curves and
//! sparsity `B̂`, the pointwise standard deviation of `β̂(t)` is
//! `sqrt(τ(1-τ)/(n B̂) · Σ_ν φ_ν(t)²/(1 + λρ_ν)²)`. Intervals are centred at
//! the estimate; the shrinkage bias `W_λ β` is not estimable and is reported
//! only through [`bias_proxy`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};
use crate::estimator::{predict, FitResult};
use crate::funcdata::{inner_l2, FunctionalSample, GridFunction};
use crate::smoothing::{norm_quantile, two_sided_z};
use crate::spectrum::{w_lambda_apply, EigenSystem};
use crate::stats;

pub const MIN_PATHS: usize = 1000;
pub const DEFAULT_PATHS: usize = 10_000;
/// Paths per RNG stream; fixed so that `q` does not depend on the thread count.
const PATH_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseCi {
    pub t: f64,
    pub tau: f64,
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
}

impl PointwiseCi {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scb {
    pub level: f64,
    pub q_alpha: f64,
    pub center: GridFunction,
    pub lower: GridFunction,
    pub upper: GridFunction,
    pub n_paths: usize,
    pub seed: u64,
}

impl Scb {
    /// Whether `f` lies inside the band at every grid point.
    pub fn contains(&self, f: &GridFunction) -> Result<bool> {
        if !f.grid().same_as(self.center.grid()) {
            return Err(FlqrError::GridMismatch);
        }
        Ok(f
            .values()
            .iter()
            .zip(self.lower.values().iter().zip(self.upper.values()))
            .all(|(v, (lo, hi))| lo <= v && v <= hi))
    }

    /// CSV with columns `t,center,lower,upper`.
    pub fn to_csv(&self) -> String {
        band_csv(
            self.center.grid().points(),
            self.center.values(),
            self.lower.values(),
            self.upper.values(),
        )
    }
}

fn band_csv(t: &[f64], center: &[f64], lower: &[f64], upper: &[f64]) -> String {
    let mut s = String::from("t,center,lower,upper\n");
    for j in 0..t.len() {
        s.push_str(&format!("{},{},{},{}\n", t[j], center[j], lower[j], upper[j]));
    }
    s
}

/// Pointwise intervals on every grid point, as CSV with columns `t,center,lower,upper`.
pub fn pointwise_csv(cis: &[PointwiseCi]) -> String {
    let t: Vec<f64> = cis.iter().map(|c| c.t).collect();
    let center: Vec<f64> = cis.iter().map(|c| c.center).collect();
    let lower: Vec<f64> = cis.iter().map(|c| c.lower()).collect();
    let upper: Vec<f64> = cis.iter().map(|c| c.upper()).collect();
    band_csv(&t, &center, &lower, &upper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCi {
    pub x0: GridFunction,
    pub tau: f64,
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    /// `σ̂²_n(x0) = 1/B̂ + Σ_ν (x⁰_ν)²/(1 + λρ_ν)²`.
    pub sigma2: f64,
}

impl QuantileCi {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower() <= v && v <= self.upper()
    }
}

/// Rejects an eigen-system that was not built for `fit`.
pub fn check_compatible(fit: &FitResult, es: &EigenSystem) -> Result<()> {
    if es.n() != fit.n() {
        return Err(FlqrError::ConfigMismatch(format!(
            "eigen-system built from {} curves, fit from {}",
            es.n(),
            fit.n()
        )));
    }
    if es.b_hat() != fit.b_hat {
        return Err(FlqrError::ConfigMismatch(format!(
            "eigen-system uses B̂ = {}, fit has {}",
            es.b_hat(),
            fit.b_hat
        )));
    }
    if !es.grid().same_as(fit.grid()) {
        return Err(FlqrError::ConfigMismatch("eigen-system and fit live on different grids".into()));
    }
    Ok(())
}

fn shrink(es: &EigenSystem, lambda: f64) -> Vec<f64> {
    es.rho().iter().map(|r| 1.0 / (1.0 + lambda * r)).collect()
}

/// `sqrt(τ(1-τ)/B̂ · Σ φ_ν(t)²/(1+λρ_ν)²)`: the standard deviation of `√n (β̂(t) - β(t))`.
fn scaled_sd(tau: f64, b_hat: f64, phi_t: &[f64], shrink: &[f64]) -> f64 {
    let s: f64 = phi_t.iter().zip(shrink).map(|(p, w)| (p * w) * (p * w)).sum();
    (tau * (1.0 - tau) / b_hat * s).sqrt()
}

/// Interval for `β(t0, τ)` at confidence `level`.
pub fn pointwise_ci(fit: &FitResult, es: &EigenSystem, t0: f64, level: f64) -> Result<PointwiseCi> {
    check_compatible(fit, es)?;
    let z = two_sided_z(level)?;
    let phi_t = es.phi_values_at(t0)?;
    let sd = scaled_sd(fit.tau, fit.b_hat, &phi_t, &shrink(es, fit.lambda));
    Ok(PointwiseCi {
        t: t0,
        tau: fit.tau,
        center: fit.beta_hat.eval(t0),
        half_width: z * sd / (fit.n() as f64).sqrt(),
        level,
    })
}

/// [`pointwise_ci`] at every grid point.
pub fn pointwise_band(fit: &FitResult, es: &EigenSystem, level: f64) -> Result<Vec<PointwiseCi>> {
    fit.grid()
        .points()
        .iter()
        .map(|&t| pointwise_ci(fit, es, t, level))
        .collect()
}

/// Simultaneous band `β̂ ± q/√n`, with `q` the `level`-quantile of
/// `sup_t |H(t)|` for `H(t) = Σ_ν κ̂_ν/(1+λρ_ν) Z_ν φ_ν(t)`.
///
/// `κ̂_ν² = τ(1-τ)(1/n)Σ_i(∫X_iφ_ν)²`. Paths are drawn in chunks of a
/// fixed size, chunk `k` from stream `k` of a generator seeded with `seed`.
pub fn scb(fit: &FitResult, es: &EigenSystem, level: f64, n_paths: usize, seed: u64) -> Result<Scb> {
    check_compatible(fit, es)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(FlqrError::DomainError(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if n_paths < MIN_PATHS {
        return Err(FlqrError::InsufficientPaths {
            got: n_paths,
            min: MIN_PATHS,
        });
    }
    let tau = fit.tau;
    let coef: Vec<f64> = es
        .score_moments()
        .iter()
        .zip(shrink(es, fit.lambda))
        .map(|(m, w)| (tau * (1.0 - tau) * m).sqrt() * w)
        .collect();
    let p = es.grid().len();
    let r = es.n_eig();
    // row j: a_ν φ_ν(t_j)
    let loadings: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..r).map(|nu| coef[nu] * es.phis()[nu].values()[j]).collect())
        .collect();

    let chunks = n_paths.div_ceil(PATH_CHUNK);
    let mut sups: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let count = PATH_CHUNK.min(n_paths - k * PATH_CHUNK);
            let mut z = vec![0.0; r];
            (0..count)
                .map(|_| {
                    for v in z.iter_mut() {
                        *v = standard_normal(&mut rng);
                    }
                    loadings
                        .iter()
                        .map(|row| row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>().abs())
                        .fold(0.0, f64::max)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sups.sort_by(f64::total_cmp);
    let q_alpha = stats::quantile_sorted(&sups, level);

    let half = q_alpha / (fit.n() as f64).sqrt();
    let center = fit.beta_hat.clone();
    let lower = GridFunction::new(center.grid().clone(), center.values().iter().map(|v| v - half).collect())?;
    let upper = GridFunction::new(center.grid().clone(), center.values().iter().map(|v| v + half).collect())?;
    Ok(Scb {
        level,
        q_alpha,
        center,
        lower,
        upper,
        n_paths,
        seed,
    })
}

/// Inverse-CDF normal draw from one uniform in `(0, 1)`.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return norm_quantile(u).expect("u in (0, 1)");
        }
    }
}

/// Interval for the conditional quantile `Q(τ | x0)`.
pub fn quantile_ci(fit: &FitResult, es: &EigenSystem, x0: &GridFunction, level: f64) -> Result<QuantileCi> {
    check_compatible(fit, es)?;
    if !x0.grid().same_as(fit.grid()) {
        return Err(FlqrError::GridMismatch);
    }
    let z = two_sided_z(level)?;
    let mut sum = 0.0;
    for (phi, w) in es.phis().iter().zip(shrink(es, fit.lambda)) {
        let x = inner_l2(x0, phi)?;
        sum += (x * w) * (x * w);
    }
    let sigma2 = 1.0 / fit.b_hat + sum;
    let tau = fit.tau;
    let half_width = z * (tau * (1.0 - tau) * sigma2 / (fit.n() as f64 * fit.b_hat)).sqrt();
    Ok(QuantileCi {
        x0: x0.clone(),
        tau,
        center: predict(fit, x0)?,
        half_width,
        level,
        sigma2,
    })
}

/// `‖W_λ β̂‖_V`: the size of the shrinkage the penalty applies to the estimate,
/// a proxy for the unestimable bias `W_λ β`.
pub fn bias_proxy(fit: &FitResult, es: &EigenSystem, sample: &FunctionalSample) -> Result<f64> {
    check_compatible(fit, es)?;
    let coords = es.coordinates(&fit.beta_hat, sample)?;
    let shrunk = w_lambda_apply(es, &coords, fit.lambda)?;
    Ok(shrunk.iter().map(|v| v * v).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{fit, FitConfig};
    use crate::simharness::{beta_true_function, generate, ErrorFamily, SimDesign};
    use crate::spectrum::solve_eigensystem;
    use approx::assert_abs_diff_eq;

    fn setup(n: usize, tau: f64, seed: u64) -> (FunctionalSample, FitResult, EigenSystem) {
        let s = generate(&SimDesign::new(n, ErrorFamily::Normal, 10.0, seed)).unwrap().sample;
        let f = fit(&s, tau, None, Some(1e-2), &FitConfig::default()).unwrap();
        let es = solve_eigensystem(&s, f.b_hat, 30, None).unwrap();
        (s, f, es)
    }

    #[test]
    fn pointwise_formula_by_hand() {
        let (_, f, es) = setup(100, 0.5, 1);
        let ci = pointwise_ci(&f, &es, 0.5, 0.95).unwrap();
        let phi = es.phi_values_at(0.5).unwrap();
        let s: f64 = phi
            .iter()
            .zip(es.rho())
            .map(|(p, r)| p * p / (1.0 + f.lambda * r).powi(2))
            .sum();
        let expect = 1.959964 * (0.25 / (100.0 * f.b_hat) * s).sqrt();
        assert_abs_diff_eq!(ci.half_width, expect, epsilon = 1e-5 * expect);
        assert_eq!(ci.center, f.beta_hat.eval(0.5));
        let wide = pointwise_ci(&f, &es, 0.5, 0.99).unwrap();
        assert!(wide.lower() < ci.lower() && wide.upper() > ci.upper());
    }

    #[test]
    fn tau_factor_is_largest_at_median() {
        let (_, f, es) = setup(100, 0.5, 2);
        let mut f25 = f.clone();
        f25.tau = 0.25;
        for t in [0.1, 0.5, 0.9] {
            let a = pointwise_ci(&f, &es, t, 0.95).unwrap().half_width;
            let b = pointwise_ci(&f25, &es, t, 0.95).unwrap().half_width;
            assert!(a >= b);
        }
    }

    #[test]
    fn mismatched_system_is_rejected() {
        let (s, f, _) = setup(60, 0.5, 3);
        let other = solve_eigensystem(&s, f.b_hat * 2.0, 10, None).unwrap();
        assert!(matches!(pointwise_ci(&f, &other, 0.5, 0.95), Err(FlqrError::ConfigMismatch(_))));
        let (s2, _, _) = setup(50, 0.5, 4);
        let es2 = solve_eigensystem(&s2, f.b_hat, 10, None).unwrap();
        assert!(matches!(quantile_ci(&f, &es2, &s.curve(0), 0.95), Err(FlqrError::ConfigMismatch(_))));
    }

    #[test]
    fn scb_properties() {
        let (_, f, es) = setup(200, 0.5, 5);
        assert!(matches!(scb(&f, &es, 0.95, 999, 1), Err(FlqrError::InsufficientPaths { .. })));
        let band = scb(&f, &es, 0.95, 10_000, 9).unwrap();
        assert_eq!(band, scb(&f, &es, 0.95, 10_000, 9).unwrap());
        // the band contains the pointwise intervals at the same level
        for ci in pointwise_band(&f, &es, 0.95).unwrap() {
            assert!(ci.half_width <= band.q_alpha / (200f64).sqrt());
        }
        for j in 0..f.grid().len() {
            assert!(band.lower.values()[j] <= band.center.values()[j]);
            assert!(band.center.values()[j] <= band.upper.values()[j]);
        }
        let more = scb(&f, &es, 0.95, 100_000, 9).unwrap();
        assert!((more.q_alpha / band.q_alpha - 1.0).abs() < 0.02);
        let wide = scb(&f, &es, 0.99, 10_000, 9).unwrap();
        assert!(wide.q_alpha > band.q_alpha);
        let truth = beta_true_function(f.grid().clone()).unwrap();
        assert!(band.contains(&truth).is_ok());
    }

    #[test]
    fn quantile_ci_special_cases() {
        let (s, f, es) = setup(100, 0.5, 6);
        let zero = GridFunction::constant(s.grid().clone(), 0.0).unwrap();
        let ci0 = quantile_ci(&f, &es, &zero, 0.95).unwrap();
        assert_abs_diff_eq!(ci0.sigma2, 1.0 / f.b_hat, epsilon = 1e-12);
        assert_eq!(ci0.center, f.alpha_hat);
        let x = s.curve(3);
        let a = quantile_ci(&f, &es, &x, 0.95).unwrap();
        let b = quantile_ci(&f, &es, &x.scaled(2.0), 0.95).unwrap();
        assert_abs_diff_eq!(b.sigma2 - 1.0 / f.b_hat, 4.0 * (a.sigma2 - 1.0 / f.b_hat), epsilon = 1e-10);
    }

    #[test]
    fn truncation_is_stable() {
        let (s, f, es) = setup(200, 0.5, 7);
        let es_big = solve_eigensystem(&s, f.b_hat, 50, None).unwrap();
        for t in [0.1, 0.5, 0.9] {
            let a = pointwise_ci(&f, &es, t, 0.95).unwrap().half_width;
            let b = pointwise_ci(&f, &es_big, t, 0.95).unwrap().half_width;
            assert!((a / b - 1.0).abs() < 1e-3, "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn bias_proxy_vanishes_without_penalty() {
        let (s, mut f, es) = setup(60, 0.5, 8);
        assert!(bias_proxy(&f, &es, &s).unwrap() > 0.0);
        f.lambda = 0.0;
        assert_eq!(bias_proxy(&f, &es, &s).unwrap(), 0.0);
    }
}
