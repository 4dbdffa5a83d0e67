//! Rule-of-thumb bandwidth and k-fold cross-validation over the penalty `λ`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};
use crate::funcdata::FunctionalSample;
use crate::optimizer::{minimize_theta, standard_init, GdConfig, LinearQuantileProblem, QuantileProblem, Theta};
use crate::rkhs::{build_gram, RepresenterGram, SobolevKernel};
use crate::smoothing::smoothed_loss_unchecked;
use crate::stats;

/// Kernel sections used by the pilot regression, beyond the null basis.
const PILOT_SECTIONS: usize = 10;
const PILOT_RIDGE: f64 = 1e-8;
/// Relative risk gap within which `λ` values count as tied.
const TIE_RTOL: f64 = 1e-12;

/// `2·decades + 1` log-spaced points from `10^lo` to `10^hi`, two per decade.
fn log_grid(lo: i32, hi: i32) -> Vec<f64> {
    let steps = 2 * (hi - lo);
    (0..=steps)
        .map(|k| 10f64.powf(lo as f64 + k as f64 * 0.5))
        .collect()
}

/// Default `λ` grid: `10⁻⁹ … 10⁻³`, two points per decade.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(-9, -3)
}

/// Fold fits stop at this gradient norm. Held-out risks move by well under
/// one fold standard error relative to `1e-6`, at a third of the cost.
pub const FOLD_TOL: f64 = 1e-5;

fn fold_gd() -> GdConfig {
    GdConfig {
        tol: FOLD_TOL,
        ..GdConfig::default()
    }
}

/// How the CV table is turned into one `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum LambdaRule {
    /// Smallest mean risk; ties within `1e-12` relative go to the larger `λ`.
    MinRisk,
    /// Largest `λ` whose mean risk is within one standard error of the minimum.
    #[default]
    OneStandardError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    #[serde(default)]
    pub rule: LambdaRule,
    /// Optimizer settings for every fold fit.
    #[serde(default = "fold_gd")]
    pub gd: GdConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            lambda_grid: default_lambda_grid(),
            folds: 5,
            seed: 0,
            rule: LambdaRule::default(),
            gd: fold_gd(),
        }
    }
}

impl TuningConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(FlqrError::InvalidInput("lambda grid is empty".into()));
        }
        if let Some(bad) = self.lambda_grid.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(FlqrError::InvalidInput(format!("lambda grid entries must be positive, got {bad}")));
        }
        if self.folds < 2 || self.folds > n {
            return Err(FlqrError::InvalidInput(format!(
                "folds must lie in 2..={n}, got {}",
                self.folds
            )));
        }
        self.gd.validate()
    }
}

/// `min(SD, IQR/1.39)` of residuals.
fn robust_scale(residuals: &[f64]) -> f64 {
    stats::std_dev(residuals).min(stats::iqr(residuals) / 1.39)
}

/// `h_ROT = 1.06 ŝ n^{-1/5}` from a pilot quantile regression.
///
/// The pilot regresses `Y` on `∫X_i ψ_l` and the first ten columns of `Ξ`,
/// with the smoothed loss at `h₀ = SD(Y) n^{-1/5}`; one fixed-point pass
/// refits at the bandwidth implied by the first residuals.
pub fn rot_bandwidth(sample: &FunctionalSample, tau: f64, kern: &SobolevKernel) -> Result<f64> {
    let gram = build_gram(sample, kern)?;
    rot_bandwidth_gram(&gram, sample.responses(), tau)
}

/// [`rot_bandwidth`] on a prebuilt Gram.
pub fn rot_bandwidth_gram(gram: &RepresenterGram, responses: &DVector<f64>, tau: f64) -> Result<f64> {
    let n = gram.n();
    if n < 10 {
        return Err(FlqrError::InvalidInput(format!("bandwidth rule needs n >= 10, got {n}")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(FlqrError::DomainError(format!("tau must lie in (0, 1), got {tau}")));
    }
    let m = gram.m();
    let k = n.min(PILOT_SECTIONS);
    let mut design = DMatrix::zeros(n, m + k);
    design.columns_mut(0, m).copy_from(gram.null_scores());
    design.columns_mut(m, k).copy_from(&gram.xi().columns(0, k));
    let design = orthonormal_columns(&design);
    let y = responses.as_slice();
    let shrink = (n as f64).powf(-0.2);

    let h0 = stats::std_dev(y) * shrink;
    if !(h0 > 0.0) {
        return Err(FlqrError::DegenerateBandwidth);
    }
    let mut h = h0;
    for _ in 0..2 {
        let pilot = LinearQuantileProblem::new(&design, responses, tau, h, PILOT_RIDGE)?;
        let (alpha, b, _) = pilot.fit(&GdConfig::default())?;
        let fitted = &design * DVector::from_vec(b);
        let res: Vec<f64> = (0..n).map(|i| y[i] - alpha - fitted[i]).collect();
        let s = robust_scale(&res);
        if !(s > 0.0) {
            return Err(FlqrError::DegenerateBandwidth);
        }
        h = 1.06 * s * shrink;
    }
    Ok(h)
}

/// `√n U` from the thin SVD of `z`, keeping singular values above `1e-10` of
/// the largest; spans the same fitted values as `z`.
fn orthonormal_columns(z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = z.nrows();
    let svd = z.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10 * top)
        .collect();
    u.select_columns(&keep) * (n as f64).sqrt()
}

/// Fold labels: `Y` sorted into blocks of `folds` consecutive order
/// statistics, each block's labels shuffled by the seeded generator.
pub fn stratified_folds(responses: &[f64], folds: usize, seed: u64) -> Vec<usize> {
    let n = responses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| responses[a].total_cmp(&responses[b]).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![0; n];
    for block in order.chunks(folds) {
        let mut ids: Vec<usize> = (0..folds).collect();
        ids.shuffle(&mut rng);
        for (&i, &f) in block.iter().zip(&ids) {
            labels[i] = f;
        }
    }
    labels
}

/// One row of the CV table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    /// Mean over folds of the held-out mean smoothed loss.
    pub mean_risk: f64,
    pub se_risk: f64,
    pub fold_risks: Vec<f64>,
    /// Set when a fold fit failed; the row is then excluded.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub rows: Vec<CvRow>,
    pub best_lambda: f64,
}

impl CvTable {
    /// CSV with columns `lambda,mean_risk,se_risk`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,mean_risk,se_risk\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.lambda, r.mean_risk, r.se_risk));
        }
        s
    }
}

/// Applies `rule` to the rows without a failure.
pub fn select_lambda(rows: &[CvRow], rule: LambdaRule) -> Result<f64> {
    let ok = || rows.iter().filter(|r| r.failure.is_none());
    let best = ok()
        .min_by(|a, b| a.mean_risk.total_cmp(&b.mean_risk).then(b.lambda.total_cmp(&a.lambda)))
        .ok_or(FlqrError::TuningFailure)?;
    let threshold = match rule {
        LambdaRule::MinRisk => best.mean_risk + TIE_RTOL * best.mean_risk.abs(),
        LambdaRule::OneStandardError => best.mean_risk + best.se_risk,
    };
    Ok(ok()
        .filter(|r| r.mean_risk <= threshold)
        .map(|r| r.lambda)
        .fold(best.lambda, f64::max))
}

/// Held-out risks of one fold for every distinct `λ` (descending), each
/// fit warm-started from the previous one.
fn fold_path(
    gram: &RepresenterGram,
    responses: &DVector<f64>,
    tau: f64,
    h: f64,
    lambdas_desc: &[f64],
    train: &[usize],
    test: &[usize],
    gd: &GdConfig,
) -> Vec<std::result::Result<f64, String>> {
    let sub = gram.subset(train);
    let y_train = DVector::from_iterator(train.len(), train.iter().map(|&i| responses[i]));
    let cross = gram.cross(test, train);
    let null_test = gram.null_scores().select_rows(test);
    let mut warm: Option<Theta> = None;
    lambdas_desc
        .iter()
        .map(|&lambda| {
            let problem = QuantileProblem::new(&sub, &y_train, tau, h, lambda).map_err(|e| e.to_string())?;
            let init = warm.clone().unwrap_or_else(|| standard_init(&y_train, sub.m(), tau));
            let (theta, _) = minimize_theta(&problem, &init, gd).map_err(|e| e.to_string())?;
            let pred = null_test.clone() * DVector::from_column_slice(&theta.d)
                + &cross * DVector::from_column_slice(&theta.c);
            let risk = test
                .iter()
                .enumerate()
                .map(|(k, &i)| smoothed_loss_unchecked(responses[i] - theta.alpha - pred[k], tau, h))
                .sum::<f64>()
                / test.len() as f64;
            warm = Some(theta);
            if risk.is_finite() {
                Ok(risk)
            } else {
                Err("non-finite held-out risk".to_string())
            }
        })
        .collect()
}

/// k-fold CV of the held-out smoothed loss over `config.lambda_grid`.
///
/// Returns the minimizing `λ` (largest among ties) and the table in grid order.
pub fn cross_validate_lambda(
    sample: &FunctionalSample,
    kern: &SobolevKernel,
    tau: f64,
    h: f64,
    config: &TuningConfig,
) -> Result<(f64, CvTable)> {
    let gram = build_gram(sample, kern)?;
    cross_validate_gram(&gram, sample.responses(), tau, h, config)
}

/// [`cross_validate_lambda`] on a prebuilt Gram.
pub fn cross_validate_gram(
    gram: &RepresenterGram,
    responses: &DVector<f64>,
    tau: f64,
    h: f64,
    config: &TuningConfig,
) -> Result<(f64, CvTable)> {
    let n = gram.n();
    config.validate(n)?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(FlqrError::DomainError(format!("tau must lie in (0, 1), got {tau}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(FlqrError::DomainError(format!("bandwidth must be positive, got {h}")));
    }
    let mut distinct = config.lambda_grid.clone();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();

    let labels = stratified_folds(responses.as_slice(), config.folds, config.seed);
    let per_fold: Vec<Vec<std::result::Result<f64, String>>> = (0..config.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            fold_path(gram, responses, tau, h, &distinct, &train, &test, &config.gd)
        })
        .collect();

    let rows: Vec<CvRow> = config
        .lambda_grid
        .iter()
        .map(|&lambda| {
            let j = distinct.iter().position(|&l| l == lambda).expect("grid value present");
            let mut fold_risks = Vec::with_capacity(config.folds);
            let mut failure = None;
            for (f, path) in per_fold.iter().enumerate() {
                match &path[j] {
                    Ok(r) => fold_risks.push(*r),
                    Err(msg) => {
                        let err = FlqrError::FoldFailure {
                            lambda,
                            fold: f,
                            message: msg.clone(),
                        };
                        log::warn!("{err}");
                        failure.get_or_insert(err.to_string());
                    }
                }
            }
            let (mean_risk, se_risk) = if failure.is_none() {
                stats::mean_se(&fold_risks)
            } else {
                (f64::NAN, f64::NAN)
            };
            CvRow {
                lambda,
                mean_risk,
                se_risk,
                fold_risks,
                failure,
            }
        })
        .collect();

    let best_lambda = select_lambda(&rows, config.rule)?;
    let (lo, hi) = config
        .lambda_grid
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)));
    if config.lambda_grid.len() > 1 && (best_lambda == lo || best_lambda == hi) {
        log::debug!("selected λ = {best_lambda:e} lies on the edge of the grid");
    }
    Ok((best_lambda, CvTable { rows, best_lambda }))
}
