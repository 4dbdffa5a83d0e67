//! Synthetic designs and Monte Carlo drivers.
//!
//! Curves follow a truncated cosine expansion
//! `X_i(t) = Σ_{k≤K} ζ_k ξ_ik ψ_k(t)` with `ζ_k = 4(-1)^{k+1} k^{-2}`,
//! `ψ_1 = 1`, `ψ_k = √2 cos((k-1)πt)` and scores uniform on `[-√3, √3]`.
//! Responses are `Y_i = α + ∫X_i β + σ ε_i` with `β(t) = e^{-t}`.
//!
//! `SNR = Var(∫Xβ) / (σ² Var(ε))`, with `Var(ε) = 1` for normal errors and
//! `3` for `t_3`. Both the signal variance and `∫X_iβ` are computed from the
//! exact coefficients `b_k = ∫ψ_k e^{-t}`, not by quadrature.
//!
//! Random draws come from `ChaCha8Rng` with fixed stream numbers; every
//! draw is an inverse-CDF transform of one uniform, so a seed fixes the
//! sample on every platform.

use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{FlqrError, Result};
use crate::estimator::{fit_gram, validate_taus, FitConfig};
use crate::funcdata::{FunctionalSample, Grid, GridFunction};
use crate::inference::{pointwise_ci, quantile_ci, scb};
use crate::optimizer::{FitTrace, GdConfig, LinearQuantileProblem};
use crate::rkhs::{build_gram, SobolevKernel};
use crate::smoothing::norm_quantile;
use crate::spectrum::{solve_eigensystem, DEFAULT_N_EIG};
use crate::stats;
use crate::tuning::{cross_validate_gram, rot_bandwidth_gram};

const STREAM_SCORES: u64 = 0;
const STREAM_ERRORS: u64 = 1;
const STREAM_NEW_CURVE: u64 = 2;

/// Error distribution of a synthetic design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorFamily {
    Normal,
    StudentT3,
}

impl ErrorFamily {
    /// Variance of one unscaled error draw.
    pub fn variance(self) -> f64 {
        match self {
            ErrorFamily::Normal => 1.0,
            ErrorFamily::StudentT3 => 3.0,
        }
    }

    /// `τ`-quantile of one unscaled error draw.
    pub fn quantile(self, tau: f64) -> f64 {
        match self {
            ErrorFamily::Normal => norm_quantile(tau).unwrap_or(f64::NAN),
            ErrorFamily::StudentT3 => student_t3().inverse_cdf(tau),
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        // open interval (0, 1) keeps both inverse CDFs finite
        let u = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        self.quantile(u)
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorFamily::Normal => "normal",
            ErrorFamily::StudentT3 => "t3",
        }
    }
}

fn student_t3() -> StudentsT {
    StudentsT::new(0.0, 1.0, 3.0).expect("valid t3 parameters")
}

/// Parameters of a synthetic design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub n_terms: usize,
    pub grid_points: usize,
    pub error_family: ErrorFamily,
    pub snr: f64,
    pub alpha_true: f64,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(n: usize, error_family: ErrorFamily, snr: f64, seed: u64) -> Self {
        SimDesign {
            n,
            n_terms: 50,
            grid_points: 101,
            error_family,
            snr,
            alpha_true: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(FlqrError::InvalidInput(format!("design needs n >= 10, got {}", self.n)));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(FlqrError::InvalidInput(format!("snr must be positive, got {}", self.snr)));
        }
        if self.n_terms < 1 {
            return Err(FlqrError::InvalidInput("n_terms must be at least 1".into()));
        }
        Grid::uniform(self.grid_points).map(|_| ())
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::uniform(self.grid_points)?))
    }

    /// Same design with another seed.
    pub fn with_seed(&self, seed: u64) -> SimDesign {
        SimDesign { seed, ..self.clone() }
    }

    /// Population variance of `∫Xβ`.
    pub fn signal_variance(&self) -> f64 {
        (1..=self.n_terms).map(|k| (zeta(k) * beta_coefficient(k)).powi(2)).sum()
    }

    /// Noise scale `σ` implied by the SNR.
    pub fn sigma(&self) -> f64 {
        (self.signal_variance() / (self.snr * self.error_family.variance())).sqrt()
    }

    /// True conditional `τ`-quantile of `Y` given a curve whose `∫Xβ` is `signal`.
    pub fn true_quantile(&self, signal: f64, tau: f64) -> f64 {
        self.alpha_true + signal + self.sigma() * self.error_family.quantile(tau)
    }
}

/// `ζ_k = 4(-1)^{k+1} k^{-2}`.
pub fn zeta(k: usize) -> f64 {
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    4.0 * sign / (k * k) as f64
}

/// `ψ_1 = 1`, `ψ_k(t) = √2 cos((k-1)πt)`.
pub fn basis(k: usize, t: f64) -> f64 {
    if k == 1 {
        1.0
    } else {
        SQRT_2 * ((k - 1) as f64 * PI * t).cos()
    }
}

/// The slope `β(t) = e^{-t}`.
pub fn beta_true(t: f64) -> f64 {
    (-t).exp()
}

pub fn beta_true_function(grid: Arc<Grid>) -> Result<GridFunction> {
    GridFunction::from_fn(grid, beta_true)
}

/// `b_k = ∫_0^1 ψ_k(t) e^{-t} dt` in closed form.
pub fn beta_coefficient(k: usize) -> f64 {
    let e1 = (-1.0f64).exp();
    if k == 1 {
        1.0 - e1
    } else {
        let w = (k - 1) as f64 * PI;
        let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        SQRT_2 * (1.0 - sign * e1) / (1.0 + w * w)
    }
}

/// A generated sample with the exact signals `∫X_iβ`.
#[derive(Debug, Clone)]
pub struct SimSample {
    pub sample: FunctionalSample,
    pub signals: Vec<f64>,
}

fn uniform_scores(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let r = 3f64.sqrt();
    (0..count).map(|_| rng.random_range(-r..r)).collect()
}

fn curve_from_scores(grid: &Grid, scores: &[f64]) -> (Vec<f64>, f64) {
    let values = grid
        .points()
        .iter()
        .map(|&t| scores.iter().enumerate().map(|(j, s)| zeta(j + 1) * s * basis(j + 1, t)).sum())
        .collect();
    let signal = scores
        .iter()
        .enumerate()
        .map(|(j, s)| zeta(j + 1) * s * beta_coefficient(j + 1))
        .sum();
    (values, signal)
}

/// Draws a sample from the design; identical seeds give identical samples.
pub fn generate(design: &SimDesign) -> Result<SimSample> {
    design.validate()?;
    let grid = design.grid()?;
    let (n, p) = (design.n, grid.len());
    let mut score_rng = ChaCha8Rng::seed_from_u64(design.seed);
    score_rng.set_stream(STREAM_SCORES);
    let mut error_rng = ChaCha8Rng::seed_from_u64(design.seed);
    error_rng.set_stream(STREAM_ERRORS);
    let sigma = design.sigma();

    let mut curves = DMatrix::zeros(n, p);
    let mut signals = Vec::with_capacity(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let scores = uniform_scores(&mut score_rng, design.n_terms);
        let (values, signal) = curve_from_scores(&grid, &scores);
        for (j, v) in values.into_iter().enumerate() {
            curves[(i, j)] = v;
        }
        y[i] = design.alpha_true + signal + sigma * design.error_family.draw(&mut error_rng);
        signals.push(signal);
    }
    Ok(SimSample {
        sample: FunctionalSample::new(grid, curves, y)?,
        signals,
    })
}

/// A fresh curve from the design's own stream, independent of [`generate`]'s
/// draws; returns the curve and its `∫Xβ`.
pub fn new_curve(design: &SimDesign) -> Result<(GridFunction, f64)> {
    design.validate()?;
    let grid = design.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    rng.set_stream(STREAM_NEW_CURVE);
    let scores = uniform_scores(&mut rng, design.n_terms);
    let (values, signal) = curve_from_scores(&grid, &scores);
    Ok((GridFunction::new(grid, values)?, signal))
}

/// `∫(β̂ - β)²` on the shared grid.
pub fn mise(beta_hat: &GridFunction, beta: &GridFunction) -> Result<f64> {
    if !beta_hat.grid().same_as(beta.grid()) {
        return Err(FlqrError::GridMismatch);
    }
    let sq: Vec<f64> = beta_hat
        .values()
        .iter()
        .zip(beta.values())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    Ok(beta.grid().integrate_values(&sq))
}

/// Fraction of variance the automatic FPCA truncation must explain.
pub const FPCA_FVE: f64 = 0.99;
pub const FPCA_MAX_COMPONENTS: usize = 20;

/// Quantile regression on leading functional principal component scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineFit {
    pub tau: f64,
    pub h: f64,
    pub n_components: usize,
    pub alpha_hat: f64,
    pub beta_hat: GridFunction,
    pub trace: FitTrace,
}

/// FPCA baseline: eigen-decompose the sample covariance operator, regress
/// `Y` on the first scores with the smoothed loss (no penalty) and map the
/// coefficients back to a slope function.
///
/// `n_components = None` keeps the fewest components explaining 99% of the
/// variance, at most 20. Components with eigenvalue below `1e-12` of the
/// largest are never used.
pub fn fpca_baseline_fit(sample: &FunctionalSample, tau: f64, n_components: Option<usize>, h: f64) -> Result<BaselineFit> {
    let (n, p) = (sample.n(), sample.p());
    if let Some(k) = n_components {
        if k == 0 || k >= n {
            return Err(FlqrError::InvalidInput(format!("n_components must lie in 1..{n}, got {k}")));
        }
    }
    let w = sample.grid().weights();
    let root: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mean: Vec<f64> = (0..p).map(|j| sample.curves().column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| (sample.curves()[(i, j)] - mean[j]) * root[j]);
    let cov = centered.tr_mul(&centered) / n as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]];
    let usable = order.iter().take_while(|&&k| eig.eigenvalues[k] > 1e-12 * top).count();
    let wanted = match n_components {
        Some(k) => k,
        None => {
            let total: f64 = order[..usable].iter().map(|&k| eig.eigenvalues[k]).sum();
            let mut acc = 0.0;
            let mut k = 0;
            while k < usable && acc < FPCA_FVE * total {
                acc += eig.eigenvalues[order[k]];
                k += 1;
            }
            k.min(FPCA_MAX_COMPONENTS)
        }
    };
    let k = wanted.min(usable);
    if k < wanted {
        log::warn!("covariance has rank {usable}; using {k} of {wanted} requested components");
    }
    if k == 0 {
        return Err(FlqrError::InvalidInput("curves have no variance".into()));
    }
    // eigenfunctions e_k = W^{-1/2} u_k and scores ∫(X_i - X̄) e_k
    let u = DMatrix::from_fn(p, k, |j, c| eig.eigenvectors[(j, order[c])]);
    let scores = &centered * &u;
    let problem = LinearQuantileProblem::new(&scores, sample.responses(), tau, h, 0.0)?;
    let (alpha, b, trace) = problem.fit(&GdConfig::default())?;
    let beta: Vec<f64> = (0..p)
        .map(|j| (0..k).map(|c| b[c] * u[(j, c)]).sum::<f64>() / root[j])
        .collect();
    let beta_hat = GridFunction::new(sample.grid().clone(), beta)?;
    let mean_fn = GridFunction::new(sample.grid().clone(), mean)?;
    let alpha_hat = alpha - crate::funcdata::inner_l2(&mean_fn, &beta_hat)?;
    Ok(BaselineFit {
        tau,
        h,
        n_components: k,
        alpha_hat,
        beta_hat,
        trace,
    })
}

/// Estimators compared by [`run_mise_experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Rkhs,
    Fpca,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Rkhs => "rkhs",
            Method::Fpca => "fpca",
        }
    }
}

/// One measurement in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub replicate: usize,
    pub method: String,
    pub tau: f64,
    pub metric: String,
    pub value: f64,
}

/// Mean and standard error of one `(method, τ, metric)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub method: String,
    pub tau: f64,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub experiment: String,
    pub design: SimDesign,
    /// Every option the experiment ran with.
    pub config: serde_json::Value,
    pub n_replicates: usize,
    pub records: Vec<McRecord>,
    pub summary: Vec<McSummary>,
    pub failures: Vec<ReplicateFailure>,
    /// Wall-clock seconds; not serialized, so reports are reproducible byte for byte.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl McReport {
    fn assemble(
        experiment: &str,
        design: &SimDesign,
        config: serde_json::Value,
        n_replicates: usize,
        results: Vec<Result<Vec<McRecord>>>,
        start: Instant,
    ) -> McReport {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (r, res) in results.into_iter().enumerate() {
            match res {
                Ok(mut recs) => records.append(&mut recs),
                Err(e) => failures.push(ReplicateFailure {
                    replicate: r,
                    message: format!("{}: {e}", e.name()),
                }),
            }
        }
        let summary = summarize(&records);
        McReport {
            experiment: experiment.to_string(),
            design: design.clone(),
            config,
            n_replicates,
            records,
            summary,
            failures,
            runtime_secs: start.elapsed().as_secs_f64(),
        }
    }

    /// Summary cell for `(method, τ, metric)`.
    pub fn cell(&self, method: &str, tau: f64, metric: &str) -> Option<&McSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.tau == tau && s.metric == metric)
    }

    /// Values of one metric by replicate.
    pub fn values(&self, method: &str, tau: f64, metric: &str) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.tau == tau && r.metric == metric)
            .map(|r| (r.replicate, r.value))
            .collect()
    }

    /// Long-format CSV: `replicate,method,tau,metric,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("replicate,method,tau,metric,value\n");
        for r in &self.records {
            s.push_str(&format!("{},{},{},{},{}\n", r.replicate, r.method, r.tau, r.metric, r.value));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| FlqrError::Io(e.to_string()))
    }
}

/// Groups records by `(method, τ, metric)` in order of first appearance.
fn summarize(records: &[McRecord]) -> Vec<McSummary> {
    let mut keys: Vec<(String, f64, String)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.tau, r.metric.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, tau, metric)| {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.tau == tau && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let (mean, se) = stats::mean_se(&vals);
            McSummary {
                method,
                tau,
                metric,
                mean,
                se,
                count: vals.len(),
            }
        })
        .collect()
}

/// Seed of replicate `r`.
pub fn replicate_seed(master: u64, r: usize) -> u64 {
    master.wrapping_add(r as u64)
}

/// Shared options of the Monte Carlo drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub taus: Vec<f64>,
    pub n_replicates: usize,
    pub fit: FitConfig,
    /// Cross-validate `λ` once per replicate, at the level closest to 0.5.
    pub shared_lambda: bool,
    /// Fixed `λ`, skipping cross-validation.
    pub lambda: Option<f64>,
}

impl McOptions {
    pub fn new(taus: Vec<f64>, n_replicates: usize) -> Self {
        McOptions {
            taus,
            n_replicates,
            fit: FitConfig::default(),
            shared_lambda: true,
            lambda: None,
        }
    }

    fn validate(&self) -> Result<()> {
        validate_taus(&self.taus)?;
        if self.n_replicates < 1 {
            return Err(FlqrError::InvalidInput("n_replicates must be at least 1".into()));
        }
        Ok(())
    }
}

/// Fits every level of one replicate; yields `(τ, fit)` pairs.
fn fit_replicate(
    sample: &FunctionalSample,
    opts: &McOptions,
    seed: u64,
) -> Result<(crate::rkhs::RepresenterGram, Vec<crate::estimator::FitResult>)> {
    let kern = SobolevKernel::cubic(sample.grid().clone())?;
    let gram = build_gram(sample, &kern)?;
    let mut config = opts.fit.clone();
    config.tuning.seed = seed;
    let shared = match (opts.lambda, opts.shared_lambda) {
        (Some(l), _) => Some(l),
        (None, true) => {
            let mid = opts
                .taus
                .iter()
                .copied()
                .min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs()))
                .expect("validated taus");
            let h = rot_bandwidth_gram(&gram, sample.responses(), mid)?;
            Some(cross_validate_gram(&gram, sample.responses(), mid, h, &config.tuning)?.0)
        }
        (None, false) => None,
    };
    let fits = opts
        .taus
        .iter()
        .map(|&tau| fit_gram(sample, &gram, tau, None, shared, &config, None))
        .collect::<Result<Vec<_>>>()?;
    Ok((gram, fits))
}

fn record(replicate: usize, method: &str, tau: f64, metric: &str, value: f64) -> McRecord {
    McRecord {
        replicate,
        method: method.to_string(),
        tau,
        metric: metric.to_string(),
        value,
    }
}

/// MISE of each method at each level over fresh samples.
///
/// Replicate `r` draws from seed `design.seed + r`. The FPCA baseline uses
/// the RKHS fit's bandwidth, so the two differ only in the slope model.
pub fn run_mise_experiment(design: &SimDesign, opts: &McOptions, methods: &[Method]) -> Result<McReport> {
    design.validate()?;
    opts.validate()?;
    let start = Instant::now();
    let truth = beta_true_function(design.grid()?)?;
    let results: Vec<Result<Vec<McRecord>>> = (0..opts.n_replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(design.seed, r);
            let sim = generate(&design.with_seed(seed))?;
            let (_, fits) = fit_replicate(&sim.sample, opts, seed)?;
            let mut recs = Vec::new();
            for f in &fits {
                for m in methods {
                    let beta = match m {
                        Method::Rkhs => f.beta_hat.clone(),
                        Method::Fpca => fpca_baseline_fit(&sim.sample, f.tau, None, f.h)?.beta_hat,
                    };
                    recs.push(record(r, m.label(), f.tau, "mise", mise(&beta, &truth)?));
                }
                if methods.contains(&Method::Rkhs) {
                    recs.push(record(r, "rkhs", f.tau, "lambda", f.lambda));
                    recs.push(record(r, "rkhs", f.tau, "h", f.h));
                }
            }
            Ok(recs)
        })
        .collect();
    let config = serde_json::json!({ "options": opts, "methods": methods });
    Ok(McReport::assemble("mise", design, config, opts.n_replicates, results, start))
}

/// Options of [`run_coverage_experiment`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageOptions {
    pub mc: McOptions,
    /// Points where pointwise intervals for `β(t)` are checked.
    pub t_points: Vec<f64>,
    pub level: f64,
    pub n_eig: usize,
    /// Check the conditional-quantile interval at the design's fixed new curve.
    pub quantile_ci: bool,
    /// Simulated paths for a band per level; `None` skips bands.
    pub scb_paths: Option<usize>,
}

impl CoverageOptions {
    pub fn new(taus: Vec<f64>, t_points: Vec<f64>, n_replicates: usize) -> Self {
        CoverageOptions {
            mc: McOptions::new(taus, n_replicates),
            t_points,
            level: 0.95,
            n_eig: DEFAULT_N_EIG,
            quantile_ci: false,
            scb_paths: None,
        }
    }
}

/// Coverage of pointwise intervals, conditional-quantile intervals and bands.
///
/// Metrics per `(τ, replicate)` are 0/1 indicators: `pointwise@t` for each
/// checked `t`, `quantile_ci` at the fixed new curve and `scb`, plus the
/// corresponding half-widths and the MISE. The new curve comes from the
/// master seed, so it is the same in every replicate.
pub fn run_coverage_experiment(design: &SimDesign, opts: &CoverageOptions) -> Result<McReport> {
    design.validate()?;
    opts.mc.validate()?;
    if let Some(t) = opts.t_points.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(FlqrError::DomainError(format!("t = {t} outside [0, 1]")));
    }
    let start = Instant::now();
    let grid = design.grid()?;
    let truth = beta_true_function(grid.clone())?;
    let x0 = if opts.quantile_ci {
        Some(new_curve(design)?)
    } else {
        None
    };
    let results: Vec<Result<Vec<McRecord>>> = (0..opts.mc.n_replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(design.seed, r);
            let sim = generate(&design.with_seed(seed))?;
            let (_, fits) = fit_replicate(&sim.sample, &opts.mc, seed)?;
            let mut recs = Vec::new();
            for f in &fits {
                let tau = f.tau;
                let es = solve_eigensystem(&sim.sample, f.b_hat, opts.n_eig, None)?;
                recs.push(record(r, "rkhs", tau, "mise", mise(&f.beta_hat, &truth)?));
                for &t in &opts.t_points {
                    let ci = pointwise_ci(f, &es, t, opts.level)?;
                    let hit = ci.contains(beta_true(t));
                    recs.push(record(r, "rkhs", tau, &format!("pointwise@{t}"), hit as u8 as f64));
                    recs.push(record(r, "rkhs", tau, &format!("half_width@{t}"), ci.half_width));
                }
                if let Some((x, signal)) = &x0 {
                    let ci = quantile_ci(f, &es, x, opts.level)?;
                    let hit = ci.contains(design.true_quantile(*signal, tau));
                    recs.push(record(r, "rkhs", tau, "quantile_ci", hit as u8 as f64));
                    recs.push(record(r, "rkhs", tau, "quantile_half_width", ci.half_width));
                }
                if let Some(paths) = opts.scb_paths {
                    let band = scb(f, &es, opts.level, paths, seed)?;
                    recs.push(record(r, "rkhs", tau, "scb", band.contains(&truth)? as u8 as f64));
                    recs.push(record(r, "rkhs", tau, "scb_q", band.q_alpha));
                }
            }
            Ok(recs)
        })
        .collect();
    let config = serde_json::to_value(opts).map_err(|e| FlqrError::Io(e.to_string()))?;
    Ok(McReport::assemble("coverage", design, config, opts.mc.n_replicates, results, start))
}
