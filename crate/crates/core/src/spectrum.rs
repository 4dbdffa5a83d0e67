//! Simultaneous diagonalization of the weighted covariance form `V` and the
//! penalty form `J`.
//!
//! `V(f, g) = (B̂/n) Σ_i (∫X_i f)(∫X_i g)` and `J(f, g) = ∫ f'' g''`. The
//! eigenfunctions are sought in a cubic B-spline space with uniform knots,
//! where `J` is exact and `V` uses the grid's trapezoid rule. They satisfy
//! `V(φ_μ, φ_ν) = δ_μν` and `J(φ_μ, φ_ν) = ρ_ν δ_μν`, with `ρ` nondecreasing.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};
use crate::funcdata::{FunctionalSample, Grid, GridFunction};
use crate::rkhs::weighted_curves;

/// Largest basis dimension used by default.
pub const DEFAULT_MAX_BASIS: usize = 50;
pub const DEFAULT_N_EIG: usize = 30;

/// Cardinal cubic B-spline on `[0, 4]` and its first two derivatives.
fn cardinal(x: f64, deriv: usize) -> f64 {
    if !(0.0..=4.0).contains(&x) {
        return 0.0;
    }
    match (deriv, x) {
        (0, x) if x < 1.0 => x * x * x / 6.0,
        (0, x) if x < 2.0 => (((-3.0 * x + 12.0) * x - 12.0) * x + 4.0) / 6.0,
        (0, x) if x < 3.0 => (((3.0 * x - 24.0) * x + 60.0) * x - 44.0) / 6.0,
        (0, x) => (4.0 - x).powi(3) / 6.0,
        (1, x) if x < 1.0 => 0.5 * x * x,
        (1, x) if x < 2.0 => 0.5 * ((-3.0 * x + 8.0) * x - 4.0),
        (1, x) if x < 3.0 => 0.5 * ((3.0 * x - 16.0) * x + 20.0),
        (1, x) => -0.5 * (4.0 - x) * (4.0 - x),
        (2, x) if x < 1.0 => x,
        (2, x) if x < 2.0 => -3.0 * x + 4.0,
        (2, x) if x < 3.0 => 3.0 * x - 8.0,
        (2, x) => 4.0 - x,
        _ => 0.0,
    }
}

/// Cubic B-splines on `[0, 1]` with `dim - 3` equal intervals.
///
/// Knots extend uniformly past both ends, so every basis function is a
/// shifted cardinal spline `B_k(t) = N(t/Δ - k + 3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    dim: usize,
}

impl SplineBasis {
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim < 4 {
            return Err(FlqrError::InvalidInput(format!(
                "cubic spline basis needs dimension >= 4, got {dim}"
            )));
        }
        Ok(SplineBasis { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intervals(&self) -> usize {
        self.dim - 3
    }

    /// Knot spacing `Δ`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.intervals() as f64
    }

    /// Values of the `deriv`-th derivative (`deriv <= 2`) of all basis functions at `t`.
    pub fn eval(&self, t: f64, deriv: usize) -> Vec<f64> {
        let delta = self.spacing();
        let x = t / delta;
        let scale = delta.powi(-(deriv as i32));
        (0..self.dim)
            .map(|k| scale * cardinal(x - k as f64 + 3.0, deriv))
            .collect()
    }

    /// `p x K` matrix of basis values on the grid.
    pub fn design(&self, grid: &Grid) -> DMatrix<f64> {
        let pts = grid.points();
        let mut b = DMatrix::zeros(pts.len(), self.dim);
        for (j, &t) in pts.iter().enumerate() {
            for (k, v) in self.eval(t, 0).into_iter().enumerate() {
                b[(j, k)] = v;
            }
        }
        b
    }

    /// Coefficients of `a + b t` in this basis (Greville abscissae).
    pub fn linear_coefficients(&self, a: f64, b: f64) -> Vec<f64> {
        let delta = self.spacing();
        (0..self.dim).map(|k| a + b * (k as f64 - 1.0) * delta).collect()
    }
}

/// `J[k][l] = ∫_0^1 B_k'' B_l''`, exact.
///
/// Second derivatives are linear on each knot interval, so Simpson's rule
/// per interval integrates their products without error.
pub fn penalty_matrix(basis: &SplineBasis) -> DMatrix<f64> {
    let k = basis.dim();
    let delta = basis.spacing();
    let mut j = DMatrix::zeros(k, k);
    for iv in 0..basis.intervals() {
        let a = iv as f64 * delta;
        let nodes = [a, a + 0.5 * delta, a + delta];
        let wts = [delta / 6.0, 4.0 * delta / 6.0, delta / 6.0];
        for (t, w) in nodes.iter().zip(wts) {
            let d2 = basis.eval(*t, 2);
            // only four functions are nonzero on an interval
            for r in iv..(iv + 4).min(k) {
                for c in iv..(iv + 4).min(k) {
                    j[(r, c)] += w * d2[r] * d2[c];
                }
            }
        }
    }
    0.5 * (&j + j.transpose())
}

/// `Ĉ(s_j, s_k) = (B̂/n) Σ_i X_i(s_j) X_i(s_k)` on the grid.
pub fn weighted_covariance(sample: &FunctionalSample, b_hat: f64) -> Result<DMatrix<f64>> {
    check_b_hat(b_hat)?;
    let x = sample.curves();
    Ok(x.tr_mul(x) * (b_hat / sample.n() as f64))
}

fn check_b_hat(b_hat: f64) -> Result<()> {
    if b_hat > 0.0 && b_hat.is_finite() {
        Ok(())
    } else {
        Err(FlqrError::DomainError(format!("B̂ must be positive, got {b_hat}")))
    }
}

/// Eigenpairs `(ρ_ν, φ_ν)` for one sample and one `B̂`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    rho: Vec<f64>,
    /// Spline coefficients of `φ_ν`, one column per pair.
    coeffs: DMatrix<f64>,
    phis: Vec<GridFunction>,
    basis: SplineBasis,
    b_hat: f64,
    n: usize,
    /// `∫X_i φ_ν`, `n x n_eig`.
    scores: DMatrix<f64>,
    v: DMatrix<f64>,
    j: DMatrix<f64>,
    regularized: bool,
}

/// Rows `∫X_i B_k`, `n x K`.
fn basis_scores(sample: &FunctionalSample, basis: &SplineBasis) -> DMatrix<f64> {
    weighted_curves(sample) * basis.design(sample.grid())
}

/// Solves `J w = ρ V w` and returns the `n_eig` pairs with smallest `ρ`.
///
/// `basis_dim = None` uses `min(n, 50)`.
pub fn solve_eigensystem(
    sample: &FunctionalSample,
    b_hat: f64,
    n_eig: usize,
    basis_dim: Option<usize>,
) -> Result<EigenSystem> {
    check_b_hat(b_hat)?;
    let n = sample.n();
    let dim = basis_dim.unwrap_or(n.min(DEFAULT_MAX_BASIS));
    let basis = SplineBasis::uniform(dim)?;
    if n_eig == 0 || n_eig > dim {
        return Err(FlqrError::InvalidInput(format!(
            "n_eig must lie in 1..={dim}, got {n_eig}"
        )));
    }
    let m = basis_scores(sample, &basis);
    let scale = b_hat / n as f64;
    let mut v = m.tr_mul(&m) * scale;
    v = 0.5 * (&v + v.transpose());
    let j = penalty_matrix(&basis);

    let trace = v.trace();
    if !(trace > 0.0) {
        return Err(FlqrError::SpectrumFailure("V has zero trace (all curves vanish)".into()));
    }
    let min_eig = v.clone().symmetric_eigenvalues().min();
    let regularized = min_eig < 1e-12 * trace;
    if regularized {
        let bump = 1e-10 * trace / dim as f64;
        for k in 0..dim {
            v[(k, k)] += bump;
        }
    }
    let chol = v.clone().cholesky().ok_or_else(|| {
        FlqrError::SpectrumFailure(format!(
            "V not positive definite after regularization (min eigenvalue {min_eig:.3e}, trace {trace:.3e})"
        ))
    })?;
    let l = chol.l();
    // M = L⁻¹ J L⁻ᵀ
    let linv_j = l.solve_lower_triangular(&j).ok_or_else(|| singular("L"))?;
    let mt = l
        .solve_lower_triangular(&linv_j.transpose())
        .ok_or_else(|| singular("L"))?;
    let mm = 0.5 * (&mt + mt.transpose());
    let eig = mm.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let u = DMatrix::from_fn(dim, n_eig, |r, c| eig.eigenvectors[(r, order[c])]);
    let mut w = l.transpose().solve_upper_triangular(&u).ok_or_else(|| singular("Lᵀ"))?;

    // re-orthonormalize in V; each pass squares the residual
    for _ in 0..2 {
        let g = w.tr_mul(&v) * &w;
        let g = 0.5 * (&g + g.transpose());
        let lg = g
            .cholesky()
            .ok_or_else(|| FlqrError::SpectrumFailure("eigenvectors lost V-orthogonality".into()))?
            .l();
        w = lg.solve_lower_triangular(&w.transpose()).ok_or_else(|| singular("G"))?.transpose();
    }
    let jw = j.clone() * &w;
    let mut rho: Vec<f64> = (0..n_eig).map(|c| w.column(c).dot(&jw.column(c)).max(0.0)).collect();

    // re-sort after the refinement so ρ stays nondecreasing
    let mut perm: Vec<usize> = (0..n_eig).collect();
    perm.sort_by(|&a, &b| rho[a].total_cmp(&rho[b]));
    rho = perm.iter().map(|&c| rho[c]).collect();
    let mut w = DMatrix::from_fn(dim, n_eig, |r, c| w[(r, perm[c])]);

    let design = basis.design(sample.grid());
    let mut values = &design * &w;
    // sign: positive at the first grid point where |φ| > 1e-6
    for c in 0..n_eig {
        let first = values.column(c).iter().copied().find(|v| v.abs() > 1e-6).unwrap_or(1.0);
        if first < 0.0 {
            w.column_mut(c).neg_mut();
            values.column_mut(c).neg_mut();
        }
    }
    let grid = sample.grid().clone();
    let phis = (0..n_eig)
        .map(|c| GridFunction::new(grid.clone(), values.column(c).iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    let scores = &m * &w;
    Ok(EigenSystem {
        rho,
        coeffs: w,
        phis,
        basis,
        b_hat,
        n,
        scores,
        v,
        j,
        regularized,
    })
}

fn singular(what: &str) -> FlqrError {
    FlqrError::SpectrumFailure(format!("triangular factor {what} is singular"))
}

impl EigenSystem {
    pub fn n_eig(&self) -> usize {
        self.rho.len()
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn phis(&self) -> &[GridFunction] {
        &self.phis
    }

    pub fn b_hat(&self) -> f64 {
        self.b_hat
    }

    /// Sample size the system was built from.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.phis[0].grid()
    }

    /// Whether `V` needed the ridge before factorization.
    pub fn regularized(&self) -> bool {
        self.regularized
    }

    /// `∫X_i φ_ν`, `n x n_eig`.
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    /// `(1/n) Σ_i (∫X_i φ_ν)²` for each `ν`.
    pub fn score_moments(&self) -> Vec<f64> {
        let nf = self.n as f64;
        self.scores.column_iter().map(|c| c.norm_squared() / nf).collect()
    }

    /// `φ_ν(t)` for all `ν`, from the spline representation.
    pub fn phi_values_at(&self, t: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(FlqrError::DomainError(format!("t = {t} outside [0, 1]")));
        }
        let b = DVector::from_vec(self.basis.eval(t, 0));
        Ok(self.coeffs.tr_mul(&b).iter().copied().collect())
    }

    /// `ΦᵀVΦ`.
    pub fn v_gram(&self) -> DMatrix<f64> {
        self.coeffs.tr_mul(&self.v) * &self.coeffs
    }

    /// `ΦᵀJΦ`.
    pub fn j_gram(&self) -> DMatrix<f64> {
        self.coeffs.tr_mul(&self.j) * &self.coeffs
    }

    /// `(max |ΦᵀVΦ - I|, max |ΦᵀJΦ - diag ρ|)`.
    pub fn fidelity(&self) -> (f64, f64) {
        let vg = self.v_gram();
        let jg = self.j_gram();
        let r = self.n_eig();
        let mut v_err: f64 = 0.0;
        let mut j_err: f64 = 0.0;
        for a in 0..r {
            for b in 0..r {
                let id = if a == b { 1.0 } else { 0.0 };
                v_err = v_err.max((vg[(a, b)] - id).abs());
                let d = if a == b { self.rho[a] } else { 0.0 };
                j_err = j_err.max((jg[(a, b)] - d).abs());
            }
        }
        (v_err, j_err)
    }

    /// `V(β, φ_ν)` for each `ν`: the `φ`-coordinates of `β` when it lies in their span.
    pub fn coordinates(&self, beta: &GridFunction, sample: &FunctionalSample) -> Result<Vec<f64>> {
        if !beta.grid().same_as(self.grid()) || !sample.grid().same_as(self.grid()) {
            return Err(FlqrError::GridMismatch);
        }
        if sample.n() != self.n {
            return Err(FlqrError::ConfigMismatch(format!(
                "eigensystem built from {} curves, sample has {}",
                self.n,
                sample.n()
            )));
        }
        let fits = weighted_curves(sample) * DVector::from_column_slice(beta.values());
        let scale = self.b_hat / self.n as f64;
        Ok(self.scores.tr_mul(&fits).iter().map(|v| v * scale).collect())
    }

    /// CSV with one row per pair: `nu,rho,` then `φ_ν` on the grid.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nu,rho");
        for t in self.grid().points() {
            s.push_str(&format!(",{t}"));
        }
        s.push('\n');
        for (k, phi) in self.phis.iter().enumerate() {
            s.push_str(&format!("{},{}", k + 1, self.rho[k]));
            for v in phi.values() {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// `W_λ` in `φ`-coordinates: coefficient `ν` times `λρ_ν/(1 + λρ_ν)`.
pub fn w_lambda_apply(es: &EigenSystem, coeffs: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if coeffs.len() != es.n_eig() {
        return Err(FlqrError::DimensionMismatch(format!(
            "{} coefficients for {} eigenpairs",
            coeffs.len(),
            es.n_eig()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(FlqrError::DomainError(format!("lambda must be nonnegative, got {lambda}")));
    }
    Ok(coeffs
        .iter()
        .zip(es.rho())
        .map(|(c, r)| {
            let lr = lambda * r;
            if lr.is_infinite() { *c } else { c * lr / (1.0 + lr) }
        })
        .collect())
}

/// Least-squares slope of `ln ρ_ν` on `ln ν` over `ν` in `range` (1-based, inclusive).
pub fn rho_growth_slope(es: &EigenSystem, range: std::ops::RangeInclusive<usize>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = range
        .filter(|&nu| nu >= 1 && nu <= es.n_eig() && es.rho[nu - 1] > 0.0)
        .map(|nu| ((nu as f64).ln(), es.rho[nu - 1].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(n: usize, p: usize, seed: u64) -> FunctionalSample {
        let grid = Arc::new(Grid::uniform(p).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..60).map(|k| rng.random_range(-1.0..1.0) / (1.0 + k as f64)).collect();
                grid.points()
                    .iter()
                    .map(|&t| {
                        a.iter()
                            .enumerate()
                            .map(|(k, c)| c * (k as f64 * std::f64::consts::PI * t).cos())
                            .sum()
                    })
                    .collect()
            })
            .collect();
        FunctionalSample::from_rows(grid, &rows, vec![0.0; n]).unwrap()
    }

    #[test]
    fn basis_partition_of_unity_and_linear_reproduction() {
        let b = SplineBasis::uniform(9).unwrap();
        let lin = b.linear_coefficients(0.3, -1.7);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            let v = b.eval(t, 0);
            assert_abs_diff_eq!(v.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
            let f: f64 = v.iter().zip(&lin).map(|(a, c)| a * c).sum();
            assert_abs_diff_eq!(f, 0.3 - 1.7 * t, epsilon = 1e-13);
            assert_abs_diff_eq!(b.eval(t, 2).iter().sum::<f64>(), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn basis_derivatives_match_finite_differences() {
        let b = SplineBasis::uniform(7).unwrap();
        let e = 1e-6;
        for &t in &[0.05, 0.33, 0.5, 0.71, 0.95] {
            let (lo, hi) = (b.eval(t - e, 0), b.eval(t + e, 0));
            let d1 = b.eval(t, 1);
            let (l1, h1) = (b.eval(t - e, 1), b.eval(t + e, 1));
            let d2 = b.eval(t, 2);
            for k in 0..7 {
                assert_abs_diff_eq!(d1[k], (hi[k] - lo[k]) / (2.0 * e), epsilon = 1e-6);
                assert_abs_diff_eq!(d2[k], (h1[k] - l1[k]) / (2.0 * e), epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn penalty_matches_dense_quadrature() {
        let b = SplineBasis::uniform(8).unwrap();
        let j = penalty_matrix(&b);
        // composite Simpson on 40 000 panels ignores the knots, so its error
        // comes only from the kinks of B''; it is bounded by panel width².
        let panels = 40_000;
        let step = 1.0 / panels as f64;
        let mut dense = DMatrix::<f64>::zeros(8, 8);
        for s in 0..panels {
            let a = s as f64 * step;
            for (t, w) in [(a, 1.0), (a + 0.5 * step, 4.0), (a + step, 1.0)] {
                let d2 = b.eval(t, 2);
                for r in 0..8 {
                    for c in 0..8 {
                        dense[(r, c)] += w * step / 6.0 * d2[r] * d2[c];
                    }
                }
            }
        }
        let scale = j.amax();
        for r in 0..8 {
            for c in 0..8 {
                assert_abs_diff_eq!(j[(r, c)] / scale, dense[(r, c)] / scale, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn penalty_null_space_and_psd() {
        let b = SplineBasis::uniform(12).unwrap();
        let j = penalty_matrix(&b);
        assert_eq!(j, j.transpose());
        for (a, s) in [(1.0, 0.0), (0.0, 1.0)] {
            let c = DVector::from_vec(b.linear_coefficients(a, s));
            assert!((&j * c).amax() < 1e-9 * j.amax());
        }
        let eig = j.symmetric_eigenvalues();
        assert!(eig.min() > -1e-9 * eig.max());
    }

    #[test]
    fn covariance_of_constant_curve() {
        let grid = Arc::new(Grid::uniform(11).unwrap());
        let s = FunctionalSample::from_rows(grid, &[vec![1.0; 11], vec![1.0; 11]], vec![0.0, 1.0]).unwrap();
        let c = weighted_covariance(&s, 0.7).unwrap();
        assert!(c.iter().all(|v| (v - 0.7).abs() < 1e-15));
        assert!(weighted_covariance(&s, 0.0).is_err());
    }

    #[test]
    fn eigensystem_diagonalizes_both_forms() {
        let s = random_sample(40, 51, 3);
        let es = solve_eigensystem(&s, 0.4, 20, None).unwrap();
        let (v_err, j_err) = es.fidelity();
        let rho_max = es.rho().iter().copied().fold(0.0, f64::max);
        assert!(v_err < 1e-8, "{v_err}");
        assert!(j_err < 1e-6 * (1.0 + rho_max), "{j_err}");
        assert!(es.rho().windows(2).all(|w| w[0] <= w[1]));
        assert!(es.rho()[0] < 1e-6 * (1.0 + es.rho()[2]));
        assert!(es.rho()[1] < 1e-6 * (1.0 + es.rho()[2]));
        assert!(es.rho()[2] > 0.0);
        // V(φ,φ) = 1 forces the score second moments to 1/B̂
        for m in es.score_moments() {
            assert_abs_diff_eq!(m, 1.0 / 0.4, epsilon = 1e-7);
        }
    }

    #[test]
    fn signs_are_fixed() {
        let s = random_sample(30, 41, 4);
        let es = solve_eigensystem(&s, 1.0, 10, None).unwrap();
        for phi in es.phis() {
            let first = phi.values().iter().find(|v| v.abs() > 1e-6).unwrap();
            assert!(*first > 0.0);
        }
        let grid_vals: Vec<f64> = es.phis().iter().map(|p| p.values()[7]).collect();
        let t = s.grid().points()[7];
        for (a, b) in es.phi_values_at(t).unwrap().iter().zip(grid_vals) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn parseval_for_functions_in_the_span() {
        let s = random_sample(40, 61, 5);
        let es = solve_eigensystem(&s, 0.8, 20, Some(20)).unwrap();
        let coef = [0.5, -1.0, 0.25, 2.0, 0.0, -0.3];
        let vals: Vec<f64> = (0..s.p())
            .map(|j| coef.iter().enumerate().map(|(k, c)| c * es.phis()[k].values()[j]).sum())
            .collect();
        let beta = GridFunction::new(s.grid().clone(), vals).unwrap();
        let x = es.coordinates(&beta, &s).unwrap();
        for (k, c) in coef.iter().enumerate() {
            assert_abs_diff_eq!(x[k], *c, epsilon = 1e-7);
        }
        // direct quadratic form V(β, β)
        let fits = weighted_curves(&s) * DVector::from_column_slice(beta.values());
        let vbb = 0.8 / 40.0 * fits.norm_squared();
        let parseval: f64 = x.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(parseval, vbb, epsilon = 1e-6 * (1.0 + vbb));
    }

    #[test]
    fn reproducing_identity_of_truncated_kernel() {
        // ⟨K_t, φ_ν⟩₁ = V(K_t, φ_ν) + λ J(K_t, φ_ν) with K_t = Σ φ_μ(t)/(1+λρ_μ) φ_μ
        let s = random_sample(40, 51, 6);
        let es = solve_eigensystem(&s, 0.5, 15, None).unwrap();
        let lambda = 1e-3;
        let t = 0.37;
        let phi_t = es.phi_values_at(t).unwrap();
        let kc = DVector::from_iterator(
            es.n_eig(),
            phi_t.iter().zip(es.rho()).map(|(p, r)| p / (1.0 + lambda * r)),
        );
        let (v_err, j_err) = es.fidelity();
        // residual allowed by the measured departures from exact diagonalization
        let tol = kc.abs().sum() * (v_err + lambda * j_err) + 1e-12;
        let inner = (es.v_gram() + es.j_gram() * lambda) * &kc;
        for nu in 0..es.n_eig() {
            assert_abs_diff_eq!(inner[nu], phi_t[nu], epsilon = tol);
        }
        assert!(tol < 1e-3 * phi_t.iter().map(|v| v.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn w_lambda_multipliers() {
        let s = random_sample(20, 31, 7);
        let es = solve_eigensystem(&s, 1.0, 6, None).unwrap();
        let c = vec![1.0; 6];
        assert!(w_lambda_apply(&es, &c, 0.0).unwrap().iter().all(|v| *v == 0.0));
        let big = w_lambda_apply(&es, &c, 1e6).unwrap();
        assert!(big[0] < 1e-3 && big[1] < 1e-3);
        assert!(big[5] > 1.0 - 1e-6);
        assert!(w_lambda_apply(&es, &c[..3], 1.0).is_err());
    }

    #[test]
    fn rejects_bad_requests() {
        let s = random_sample(20, 31, 8);
        assert!(solve_eigensystem(&s, 1.0, 21, None).is_err());
        assert!(solve_eigensystem(&s, -1.0, 5, None).is_err());
        assert!(solve_eigensystem(&s, 1.0, 0, None).is_err());
    }
}
