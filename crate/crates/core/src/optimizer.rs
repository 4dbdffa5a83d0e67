//! Gradient descent with safeguarded Barzilai-Borwein steps.
//!
//! The representer objective is
//!
//! ```text
//! Q_h(α, d, c) = (1/n) Σ l_h(Y_i - α - N_i·d - Ξ_i·c; τ) + (λ/2) cᵀΞc
//! ```
//!
//! and [`minimize`] runs the plain GD update `θ ← θ - γ_r ∇Q_h(θ)` with
//! `γ_0 = 1` and, afterwards, `γ_r = min{γ1, γ2, 100}` when `γ1 > 0` and `1`
//! otherwise. BB steps are not monotone, so the best iterate seen is kept.
//!
//! When most residuals sit in the linear part of `l_h` the gradient barely
//! changes between iterates, and the capped rule can lock into a cycle of
//! steps 100 and 50. With `nonmonotone_window > 0` a proposed step is halved
//! until the objective falls below the maximum of the last few accepted
//! values (less a sufficient-decrease margin); accepted steps are the BB
//! steps themselves whenever that test passes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};
use crate::rkhs::RepresenterGram;
use crate::smoothing::{norm_cdf, smoothed_loss_unchecked};

/// A differentiable objective over a flat parameter vector.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the objective value.
    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Quantity compared with `tol`; the gradient norm unless the problem is
    /// a reparameterization of another one.
    fn stationarity(&self, _x: &[f64], grad: &[f64]) -> f64 {
        norm2(grad)
    }
}

/// Representer coordinates of a fitted quantile model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: f64,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
}

impl Theta {
    pub fn zeros(m: usize, n: usize) -> Self {
        Theta {
            alpha: 0.0,
            d: vec![0.0; m],
            c: vec![0.0; n],
        }
    }

    /// Concatenation `(α, d, c)`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.d.len() + self.c.len());
        v.push(self.alpha);
        v.extend_from_slice(&self.d);
        v.extend_from_slice(&self.c);
        v
    }

    pub fn from_flat(x: &[f64], m: usize) -> Self {
        Theta {
            alpha: x[0],
            d: x[1..1 + m].to_vec(),
            c: x[1 + m..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.d.iter().chain(&self.c).all(|v| v.is_finite())
    }
}

/// Gradient of `Q_h` split by block.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGradient {
    pub alpha: f64,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
}

impl ThetaGradient {
    pub fn norm(&self) -> f64 {
        (self.alpha * self.alpha + self.d.iter().chain(&self.c).map(|v| v * v).sum::<f64>()).sqrt()
    }
}

/// Stopping rule and step-size constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdConfig {
    /// Gradient-norm threshold.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper cap on the BB step.
    pub gamma_cap: f64,
    /// First step size.
    pub gamma0: f64,
    /// Length of the objective memory for the nonmonotone acceptance test;
    /// `0` takes every BB step unconditionally.
    #[serde(default)]
    pub nonmonotone_window: usize,
    #[serde(default)]
    pub coordinates: Coordinates,
}

/// Parameterization of the penalized block that [`minimize_theta`] iterates in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Coordinates {
    /// The representer coefficients `c` themselves.
    Representer,
    /// `b = Λ^{1/2} Uᵀ c` for `Ξ = U Λ Uᵀ` restricted to the numerical range
    /// of `Ξ`; the objective becomes a ridge problem in `b` with the same
    /// minimizers and the same `Ξc`.
    #[default]
    Whitened,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            tol: 1e-6,
            max_iter: 10_000,
            gamma_cap: 100.0,
            gamma0: 1.0,
            nonmonotone_window: 10,
            coordinates: Coordinates::Whitened,
        }
    }
}

impl GdConfig {
    /// The bare step rule on the representer coefficients, with no acceptance test.
    pub fn unguarded() -> Self {
        GdConfig {
            nonmonotone_window: 0,
            coordinates: Coordinates::Representer,
            ..GdConfig::default()
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(FlqrError::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(FlqrError::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.gamma_cap > 0.0 && self.gamma0 > 0.0) {
            return Err(FlqrError::InvalidInput("step sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitStatus {
    Converged,
    MaxIterReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    pub iterations: usize,
    pub objective_path: Vec<f64>,
    /// Gradient norm at the returned iterate.
    pub final_grad_norm: f64,
    /// Steps where the BB rate was replaced by the fallback or the cap, plus
    /// step halvings made by the acceptance test.
    pub safeguard_hits: usize,
    pub status: FitStatus,
}

impl FitTrace {
    pub fn converged(&self) -> bool {
        self.status == FitStatus::Converged
    }

    pub fn initial_objective(&self) -> f64 {
        self.objective_path[0]
    }

    pub fn best_objective(&self) -> f64 {
        self.objective_path.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// The two BB rates `γ1 = <δ,δ>/<δ,g>` and `γ2 = <δ,g>/<g,g>`.
pub fn bb_step(delta: &[f64], g: &[f64]) -> Result<(f64, f64)> {
    if delta.len() != g.len() {
        return Err(FlqrError::DimensionMismatch(format!(
            "delta has {} entries, g has {}",
            delta.len(),
            g.len()
        )));
    }
    let dd = dot(delta, delta);
    let dg = dot(delta, g);
    let gg = dot(g, g);
    if dg == 0.0 || gg == 0.0 {
        return Err(FlqrError::SafeguardTrigger);
    }
    Ok((dd / dg, dg / gg))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sufficient-decrease constant of the acceptance test.
const ARMIJO: f64 = 1e-4;
/// Step halvings tried before a step is taken regardless.
const MAX_HALVINGS: usize = 60;

/// Result of [`minimize`]: the returned point and its trace.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub trace: FitTrace,
}

/// Minimizes `problem` from `init` by GD with safeguarded BB steps.
///
/// Returns the first iterate whose gradient norm is at most `tol`, or the
/// iterate with the smallest objective after `max_iter` steps.
pub fn minimize<P: SmoothObjective + ?Sized>(problem: &P, init: &[f64], config: &GdConfig) -> Result<Minimum> {
    config.validate()?;
    let dim = problem.dim();
    if init.len() != dim {
        return Err(FlqrError::DimensionMismatch(format!(
            "initial point has {} entries, problem has {dim}",
            init.len()
        )));
    }
    let mut x = init.to_vec();
    let mut g = vec![0.0; dim];
    let f = problem.value_and_gradient(&x, &mut g);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(FlqrError::DivergenceError { iteration: 0 });
    }
    let mut gnorm = problem.stationarity(&x, &g);
    let mut path = vec![f];
    let mut best = (f, x.clone(), gnorm);
    let mut safeguard_hits = 0;
    if gnorm <= config.tol {
        return Ok(Minimum {
            x,
            trace: FitTrace {
                iterations: 0,
                objective_path: path,
                final_grad_norm: gnorm,
                safeguard_hits,
                status: FitStatus::Converged,
            },
        });
    }

    let mut gamma = config.gamma0;
    let mut x_new = vec![0.0; dim];
    let mut g_new = vec![0.0; dim];
    let mut delta = vec![0.0; dim];
    let mut gdiff = vec![0.0; dim];
    let mut recent = std::collections::VecDeque::with_capacity(config.nonmonotone_window.max(1));
    recent.push_back(f);
    for iter in 1..=config.max_iter {
        let reference = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gg = dot(&g, &g);
        let mut halvings = 0;
        let f_new = loop {
            for k in 0..dim {
                x_new[k] = x[k] - gamma * g[k];
            }
            let f_try = problem.value_and_gradient(&x_new, &mut g_new);
            let finite = f_try.is_finite() && g_new.iter().all(|v| v.is_finite());
            if config.nonmonotone_window == 0 {
                if !finite {
                    return Err(FlqrError::DivergenceError { iteration: iter });
                }
                break f_try;
            }
            // slack of a few ulps so the test cannot stall on roundoff
            let slack = 4.0 * f64::EPSILON * reference.abs();
            if finite && f_try <= reference - ARMIJO * gamma * gg + slack {
                break f_try;
            }
            if halvings == MAX_HALVINGS {
                if !finite {
                    return Err(FlqrError::DivergenceError { iteration: iter });
                }
                break f_try;
            }
            gamma *= 0.5;
            halvings += 1;
            safeguard_hits += 1;
        };
        if config.nonmonotone_window > 0 {
            if recent.len() == config.nonmonotone_window {
                recent.pop_front();
            }
            recent.push_back(f_new);
        }
        path.push(f_new);
        for k in 0..dim {
            delta[k] = x_new[k] - x[k];
            gdiff[k] = g_new[k] - g[k];
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        gnorm = problem.stationarity(&x, &g);
        if f_new < best.0 {
            best = (f_new, x.clone(), gnorm);
        }
        if gnorm <= config.tol {
            return Ok(Minimum {
                x,
                trace: FitTrace {
                    iterations: iter,
                    objective_path: path,
                    final_grad_norm: gnorm,
                    safeguard_hits,
                    status: FitStatus::Converged,
                },
            });
        }
        gamma = match bb_step(&delta, &gdiff) {
            Ok((g1, g2)) if g1 > 0.0 && g1.is_finite() => {
                let step = g1.min(g2).min(config.gamma_cap);
                if !(step > 0.0) || !step.is_finite() {
                    safeguard_hits += 1;
                    1.0
                } else {
                    if step == config.gamma_cap {
                        safeguard_hits += 1;
                    }
                    step
                }
            }
            _ => {
                safeguard_hits += 1;
                1.0
            }
        };
    }
    let (_, bx, bnorm) = best;
    Ok(Minimum {
        x: bx,
        trace: FitTrace {
            iterations: config.max_iter,
            objective_path: path,
            final_grad_norm: bnorm,
            safeguard_hits,
            status: FitStatus::MaxIterReached,
        },
    })
}

/// The reduced representer objective at one quantile level.
#[derive(Debug, Clone, Copy)]
pub struct QuantileProblem<'a> {
    pub gram: &'a RepresenterGram,
    pub responses: &'a DVector<f64>,
    pub tau: f64,
    pub h: f64,
    pub lambda: f64,
}

impl<'a> QuantileProblem<'a> {
    pub fn new(
        gram: &'a RepresenterGram,
        responses: &'a DVector<f64>,
        tau: f64,
        h: f64,
        lambda: f64,
    ) -> Result<Self> {
        if gram.n() != responses.len() {
            return Err(FlqrError::DimensionMismatch(format!(
                "gram has {} curves, {} responses",
                gram.n(),
                responses.len()
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(FlqrError::DomainError(format!("tau must lie in (0, 1), got {tau}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FlqrError::DomainError(format!("bandwidth must be positive, got {h}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(FlqrError::DomainError(format!("lambda must be nonnegative, got {lambda}")));
        }
        Ok(QuantileProblem {
            gram,
            responses,
            tau,
            h,
            lambda,
        })
    }

    fn m(&self) -> usize {
        self.gram.m()
    }

    /// `(Y - α - N d - Ξ c, Ξ c)` for flat parameters.
    fn residuals(&self, x: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let m = self.m();
        let d = DVector::from_column_slice(&x[1..1 + m]);
        let c = DVector::from_column_slice(&x[1 + m..]);
        let xic = self.gram.xi() * &c;
        let mut eps = self.responses - self.gram.null_scores() * d - &xic;
        eps.add_scalar_mut(-x[0]);
        (eps, xic)
    }

    /// Residuals `Y_i - α - N_i·d - Ξ_i·c` at `theta`.
    pub fn residuals_at(&self, theta: &Theta) -> DVector<f64> {
        self.residuals(&theta.to_flat()).0
    }

    fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.d.len() != self.m() || theta.c.len() != self.gram.n() {
            return Err(FlqrError::DimensionMismatch(format!(
                "theta has (m, n) = ({}, {}), problem has ({}, {})",
                theta.d.len(),
                theta.c.len(),
                self.m(),
                self.gram.n()
            )));
        }
        Ok(())
    }
}

impl SmoothObjective for QuantileProblem<'_> {
    fn dim(&self) -> usize {
        1 + self.m() + self.gram.n()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let (eps, xic) = self.residuals(x);
        let n = eps.len() as f64;
        let loss: f64 = eps.iter().map(|&u| smoothed_loss_unchecked(u, self.tau, self.h)).sum::<f64>() / n;
        let c = &x[1 + self.m()..];
        loss + 0.5 * self.lambda * dot(c, xic.as_slice())
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.m();
        let (eps, xic) = self.residuals(x);
        let n = eps.len();
        let nf = n as f64;
        let (tau, h) = (self.tau, self.h);
        let mut loss = 0.0;
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let u = eps[i];
            loss += smoothed_loss_unchecked(u, tau, h);
            w[i] = (norm_cdf(-u / h) - tau) / nf;
        }
        let c = &x[1 + m..];
        let value = loss / nf + 0.5 * self.lambda * dot(c, xic.as_slice());

        grad[0] = w.sum();
        let gd = self.gram.null_scores().tr_mul(&w);
        grad[1..1 + m].copy_from_slice(gd.as_slice());
        // Ξ (w + λ c)
        let mut v = w;
        for (vi, ci) in v.iter_mut().zip(c) {
            *vi += self.lambda * ci;
        }
        let gc = self.gram.xi() * v;
        grad[1 + m..].copy_from_slice(gc.as_slice());
        value
    }
}

/// `Q_h(θ)` for the representer problem.
pub fn objective(
    theta: &Theta,
    gram: &RepresenterGram,
    responses: &DVector<f64>,
    tau: f64,
    h: f64,
    lambda: f64,
) -> Result<f64> {
    let p = QuantileProblem::new(gram, responses, tau, h, lambda)?;
    p.check_theta(theta)?;
    Ok(p.value(&theta.to_flat()))
}

/// `∇Q_h(θ)` for the representer problem.
pub fn gradient(
    theta: &Theta,
    gram: &RepresenterGram,
    responses: &DVector<f64>,
    tau: f64,
    h: f64,
    lambda: f64,
) -> Result<ThetaGradient> {
    let p = QuantileProblem::new(gram, responses, tau, h, lambda)?;
    p.check_theta(theta)?;
    let mut g = vec![0.0; p.dim()];
    p.value_and_gradient(&theta.to_flat(), &mut g);
    let t = Theta::from_flat(&g, p.m());
    Ok(ThetaGradient {
        alpha: t.alpha,
        d: t.d,
        c: t.c,
    })
}

/// Runs [`minimize`] on the representer problem from `init`, in the
/// coordinates selected by `config`.
pub fn minimize_theta(problem: &QuantileProblem<'_>, init: &Theta, config: &GdConfig) -> Result<(Theta, FitTrace)> {
    problem.check_theta(init)?;
    let m = problem.m();
    match config.coordinates {
        Coordinates::Representer => {
            let res = minimize(problem, &init.to_flat(), config)?;
            Ok((Theta::from_flat(&res.x, m), res.trace))
        }
        Coordinates::Whitened => {
            let w = WhitenedProblem::new(problem);
            let res = minimize(&w, &w.to_whitened(init), config)?;
            Ok((w.to_theta(&res.x), res.trace))
        }
    }
}

/// Eigenvalues of `Ξ` below this fraction of the largest are treated as zero.
const RANGE_CUTOFF: f64 = 1e-13;

/// [`QuantileProblem`] with `c = U Λ^{-1/2} b`.
///
/// The loss sees `Ξc = U Λ^{1/2} b` and the penalty is `λ‖b‖²/2`. The
/// stationarity measure is the norm of the representer-coordinate gradient,
/// `g_c = U Λ^{1/2} g_b`.
struct WhitenedProblem<'a> {
    inner: &'a QuantileProblem<'a>,
    /// `U Λ^{1/2}`, `n x r`.
    design: DMatrix<f64>,
    /// `Λ^{1/2}`.
    root: Vec<f64>,
    /// `U`, `n x r`.
    basis: DMatrix<f64>,
}

impl<'a> WhitenedProblem<'a> {
    fn new(inner: &'a QuantileProblem<'a>) -> Self {
        let eig = inner.gram.xi().clone().symmetric_eigen();
        let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
        let mut keep: Vec<usize> = (0..eig.eigenvalues.len())
            .filter(|&k| top > 0.0 && eig.eigenvalues[k] > RANGE_CUTOFF * top)
            .collect();
        // descending order, so the layout does not depend on the solver's ordering
        keep.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let n = inner.gram.n();
        let basis = DMatrix::from_fn(n, keep.len(), |i, k| eig.eigenvectors[(i, keep[k])]);
        let root: Vec<f64> = keep.iter().map(|&k| eig.eigenvalues[k].sqrt()).collect();
        let mut design = basis.clone();
        for (k, mut col) in design.column_iter_mut().enumerate() {
            col *= root[k];
        }
        WhitenedProblem {
            inner,
            design,
            root,
            basis,
        }
    }

    fn rank(&self) -> usize {
        self.root.len()
    }

    fn to_whitened(&self, theta: &Theta) -> Vec<f64> {
        let m = self.inner.m();
        let mut x = Vec::with_capacity(1 + m + self.rank());
        x.push(theta.alpha);
        x.extend_from_slice(&theta.d);
        let b = self.design.tr_mul(&DVector::from_column_slice(&theta.c));
        x.extend(b.iter());
        x
    }

    fn to_theta(&self, x: &[f64]) -> Theta {
        let m = self.inner.m();
        let scaled: Vec<f64> = x[1 + m..].iter().zip(&self.root).map(|(b, r)| b / r).collect();
        let c = &self.basis * DVector::from_vec(scaled);
        Theta {
            alpha: x[0],
            d: x[1..1 + m].to_vec(),
            c: c.iter().copied().collect(),
        }
    }

    fn residuals(&self, x: &[f64]) -> DVector<f64> {
        let m = self.inner.m();
        let d = DVector::from_column_slice(&x[1..1 + m]);
        let b = DVector::from_column_slice(&x[1 + m..]);
        let mut eps = self.inner.responses - self.inner.gram.null_scores() * d - &self.design * b;
        eps.add_scalar_mut(-x[0]);
        eps
    }
}

impl SmoothObjective for WhitenedProblem<'_> {
    fn dim(&self) -> usize {
        1 + self.inner.m() + self.rank()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let eps = self.residuals(x);
        let n = eps.len() as f64;
        let (tau, h) = (self.inner.tau, self.inner.h);
        let b = &x[1 + self.inner.m()..];
        eps.iter().map(|&u| smoothed_loss_unchecked(u, tau, h)).sum::<f64>() / n
            + 0.5 * self.inner.lambda * dot(b, b)
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.inner.m();
        let eps = self.residuals(x);
        let n = eps.len();
        let nf = n as f64;
        let (tau, h, lambda) = (self.inner.tau, self.inner.h, self.inner.lambda);
        let mut loss = 0.0;
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let u = eps[i];
            loss += smoothed_loss_unchecked(u, tau, h);
            w[i] = (norm_cdf(-u / h) - tau) / nf;
        }
        grad[0] = w.sum();
        let gd = self.inner.gram.null_scores().tr_mul(&w);
        grad[1..1 + m].copy_from_slice(gd.as_slice());
        let gb = self.design.tr_mul(&w);
        let b = &x[1 + m..];
        for k in 0..gb.len() {
            grad[1 + m + k] = gb[k] + lambda * b[k];
        }
        loss / nf + 0.5 * lambda * dot(b, b)
    }

    fn stationarity(&self, _x: &[f64], grad: &[f64]) -> f64 {
        let m = self.inner.m();
        let head = dot(&grad[..1 + m], &grad[..1 + m]);
        let tail: f64 = grad[1 + m..].iter().zip(&self.root).map(|(g, r)| (g * r) * (g * r)).sum();
        (head + tail).sqrt()
    }
}

/// Standard initial point: `α` at the empirical τ-quantile of Y, `d = c = 0`.
pub fn standard_init(responses: &DVector<f64>, m: usize, tau: f64) -> Theta {
    let mut theta = Theta::zeros(m, responses.len());
    theta.alpha = crate::stats::quantile(responses.as_slice(), tau);
    theta
}

/// Smoothed linear quantile regression `Y ~ α + Z b` with a ridge on `b`.
///
/// Columns of `Z` are rescaled to unit root-mean-square internally; the
/// ridge acts on the rescaled coefficients.
#[derive(Debug, Clone)]
pub struct LinearQuantileProblem {
    design: DMatrix<f64>,
    scales: Vec<f64>,
    responses: DVector<f64>,
    tau: f64,
    h: f64,
    ridge: f64,
}

impl LinearQuantileProblem {
    pub fn new(design: &DMatrix<f64>, responses: &DVector<f64>, tau: f64, h: f64, ridge: f64) -> Result<Self> {
        let (n, q) = design.shape();
        if responses.len() != n {
            return Err(FlqrError::DimensionMismatch(format!(
                "design has {n} rows, {} responses",
                responses.len()
            )));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(FlqrError::DomainError(format!("tau must lie in (0, 1), got {tau}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(FlqrError::DomainError(format!("bandwidth must be positive, got {h}")));
        }
        let mut z = design.clone();
        let mut scales = vec![1.0; q];
        for (k, mut col) in z.column_iter_mut().enumerate() {
            let rms = (col.norm_squared() / n as f64).sqrt();
            if rms > 0.0 {
                col /= rms;
                scales[k] = rms;
            }
        }
        Ok(LinearQuantileProblem {
            design: z,
            scales,
            responses: responses.clone(),
            tau,
            h,
            ridge,
        })
    }

    /// Fits from `α = quantile(Y)`, `b = 0`; returns `(α, b)` on the original scale.
    pub fn fit(&self, config: &GdConfig) -> Result<(f64, Vec<f64>, FitTrace)> {
        let mut init = vec![0.0; self.dim()];
        init[0] = crate::stats::quantile(self.responses.as_slice(), self.tau);
        let res = minimize(self, &init, config)?;
        let b = res.x[1..].iter().zip(&self.scales).map(|(v, s)| v / s).collect();
        Ok((res.x[0], b, res.trace))
    }

    fn residuals(&self, x: &[f64]) -> DVector<f64> {
        let b = DVector::from_column_slice(&x[1..]);
        let mut eps = &self.responses - &self.design * b;
        eps.add_scalar_mut(-x[0]);
        eps
    }
}

impl SmoothObjective for LinearQuantileProblem {
    fn dim(&self) -> usize {
        1 + self.design.ncols()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let eps = self.residuals(x);
        let n = eps.len() as f64;
        eps.iter().map(|&u| smoothed_loss_unchecked(u, self.tau, self.h)).sum::<f64>() / n
            + 0.5 * self.ridge * dot(&x[1..], &x[1..])
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let eps = self.residuals(x);
        let n = eps.len();
        let nf = n as f64;
        let mut loss = 0.0;
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let u = eps[i];
            loss += smoothed_loss_unchecked(u, self.tau, self.h);
            w[i] = (norm_cdf(-u / self.h) - self.tau) / nf;
        }
        grad[0] = w.sum();
        let gb = self.design.tr_mul(&w);
        for k in 0..gb.len() {
            grad[1 + k] = gb[k] + self.ridge * x[1 + k];
        }
        loss / nf + 0.5 * self.ridge * dot(&x[1..], &x[1..])
    }
}
