//! Second-order Sobolev reproducing kernel and the representer-theorem Gram
//! matrices.
//!
//! The kernel pair for the norm `Σ_{l<m} (∫f^(l))² + ∫(f^(m))²` is built from
//! scaled Bernoulli polynomials `k_r = B_r / r!`:
//! `R0(s,t) = 1 + k1(s)k1(t)` and `R1(s,t) = k2(s)k2(t) - k4(|s-t|)`.
//! `R1` reproduces the penalty subspace `H1`, in which `J(f, f)` is the squared norm.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{FlqrError, Result};
use crate::funcdata::{FunctionalSample, Grid, GridFunction};

#[inline]
pub fn k1(t: f64) -> f64 {
    t - 0.5
}

#[inline]
pub fn k2(t: f64) -> f64 {
    let a = k1(t);
    0.5 * (a * a - 1.0 / 12.0)
}

#[inline]
pub fn k4(t: f64) -> f64 {
    let a2 = k1(t) * k1(t);
    (a2 * a2 - 0.5 * a2 + 7.0 / 240.0) / 24.0
}

#[inline]
pub(crate) fn r1_unchecked(s: f64, t: f64) -> f64 {
    k2(s) * k2(t) - k4((s - t).abs())
}

/// Reproducing kernel of the penalized subspace, `R1(s, t)`.
pub fn kernel_r1(s: f64, t: f64) -> Result<f64> {
    for x in [s, t] {
        if !(0.0..=1.0).contains(&x) {
            return Err(FlqrError::DomainError(format!(
                "kernel argument {x} outside [0, 1]"
            )));
        }
    }
    Ok(r1_unchecked(s, t))
}

/// Sobolev kernel of order `m` discretized on a grid.
#[derive(Debug, Clone)]
pub struct SobolevKernel {
    order: usize,
    grid: Arc<Grid>,
    r1: DMatrix<f64>,
    null_basis: Vec<GridFunction>,
}

impl SobolevKernel {
    /// Builds the kernel. Only `m = 2` is implemented.
    pub fn new(grid: Arc<Grid>, order: usize) -> Result<Self> {
        if order != 2 {
            return Err(FlqrError::InvalidInput(format!(
                "only Sobolev order m = 2 is supported, got {order}"
            )));
        }
        let pts = grid.points();
        let p = pts.len();
        let r1 = DMatrix::from_fn(p, p, |j, k| r1_unchecked(pts[j], pts[k]));
        let null_basis = vec![
            GridFunction::constant(grid.clone(), 1.0)?,
            GridFunction::from_fn(grid.clone(), |t| t - 0.5)?,
        ];
        Ok(SobolevKernel {
            order,
            grid,
            r1,
            null_basis,
        })
    }

    pub fn cubic(grid: Arc<Grid>) -> Result<Self> {
        SobolevKernel::new(grid, 2)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `R1` evaluated on the grid, `p x p`.
    pub fn r1(&self) -> &DMatrix<f64> {
        &self.r1
    }

    /// Null-space basis `{1, t - 1/2}`, stored unnormalized.
    pub fn null_basis(&self) -> &[GridFunction] {
        &self.null_basis
    }

    /// Null-space basis as an `m x p` matrix.
    pub fn null_matrix(&self) -> DMatrix<f64> {
        let p = self.grid.len();
        DMatrix::from_fn(self.order, p, |l, j| self.null_basis[l].values()[j])
    }
}

/// Curves scaled by the trapezoid weights, `n x p`.
pub(crate) fn weighted_curves(sample: &FunctionalSample) -> DMatrix<f64> {
    let w = sample.grid().weights();
    let mut a = sample.curves().clone();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= w[j];
    }
    a
}

fn check_grid(sample: &FunctionalSample, kern: &SobolevKernel) -> Result<()> {
    if sample.grid().same_as(kern.grid()) {
        Ok(())
    } else {
        Err(FlqrError::GridMismatch)
    }
}

/// Kernel sections `ξ_i(t) = ∫ R1(t, s) X_i(s) ds` on the grid, as an `n x p` matrix.
pub fn xi_matrix(sample: &FunctionalSample, kern: &SobolevKernel) -> Result<DMatrix<f64>> {
    check_grid(sample, kern)?;
    Ok(weighted_curves(sample) * kern.r1())
}

/// Kernel sections as grid functions.
pub fn xi_functions(sample: &FunctionalSample, kern: &SobolevKernel) -> Result<Vec<GridFunction>> {
    let m = xi_matrix(sample, kern)?;
    (0..m.nrows())
        .map(|i| GridFunction::new(kern.grid().clone(), m.row(i).iter().copied().collect()))
        .collect()
}

/// Gram matrices of the reduced objective.
///
/// `xi[i][j] = J(ξ_i, ξ_j) = ∬ X_i R1 X_j`, which also equals the `H^m`
/// pairing `<ξ_i, ξ_j>` because every `ξ_i` lies in `H1`; the `S` matrix of
/// the objective is therefore the same matrix.
#[derive(Debug, Clone)]
pub struct RepresenterGram {
    xi: DMatrix<f64>,
    null_scores: DMatrix<f64>,
    sections: DMatrix<f64>,
    null_values: DMatrix<f64>,
}

impl RepresenterGram {
    /// `Ξ`, `n x n`.
    pub fn xi(&self) -> &DMatrix<f64> {
        &self.xi
    }

    /// `S = Ξ`.
    pub fn s(&self) -> &DMatrix<f64> {
        &self.xi
    }

    /// `N[i][l] = ∫ X_i ψ_l`, `n x m`.
    pub fn null_scores(&self) -> &DMatrix<f64> {
        &self.null_scores
    }

    /// `ξ_i` on the grid, `n x p`.
    pub fn sections(&self) -> &DMatrix<f64> {
        &self.sections
    }

    /// `ψ_l` on the grid, `m x p`.
    pub fn null_values(&self) -> &DMatrix<f64> {
        &self.null_values
    }

    pub fn n(&self) -> usize {
        self.xi.nrows()
    }

    pub fn m(&self) -> usize {
        self.null_scores.ncols()
    }

    /// Gram of the sub-sample `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> RepresenterGram {
        RepresenterGram {
            xi: self.xi.select_rows(rows).select_columns(rows),
            null_scores: self.null_scores.select_rows(rows),
            sections: self.sections.select_rows(rows),
            null_values: self.null_values.clone(),
        }
    }

    /// `Ξ[rows, cols]`: pairings of the curves in `rows` with the sections in `cols`.
    pub fn cross(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        self.xi.select_rows(rows).select_columns(cols)
    }

    /// `Σ d_l ψ_l(t) + Σ c_i ξ_i(t)` on the grid.
    pub fn assemble_beta(&self, d: &[f64], c: &[f64]) -> Vec<f64> {
        let p = self.sections.ncols();
        (0..p)
            .map(|j| {
                let null: f64 = d.iter().enumerate().map(|(l, dl)| dl * self.null_values[(l, j)]).sum();
                let span: f64 = c.iter().enumerate().map(|(i, ci)| ci * self.sections[(i, j)]).sum();
                null + span
            })
            .collect()
    }
}

/// Builds `Ξ`, `N` and the kernel sections for a sample.
pub fn build_gram(sample: &FunctionalSample, kern: &SobolevKernel) -> Result<RepresenterGram> {
    check_grid(sample, kern)?;
    let a = weighted_curves(sample);
    let sections = &a * kern.r1();
    let raw = &sections * a.transpose();
    let xi = 0.5 * (&raw + raw.transpose());
    let null_values = kern.null_matrix();
    let null_scores = &a * null_values.transpose();
    Ok(RepresenterGram {
        xi,
        null_scores,
        sections,
        null_values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DVector, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    /// Fourier expansion of R1: k2(x) = 2 Σ cos(2πkx)/(2πk)², k4(x) = -2 Σ cos(2πkx)/(2πk)⁴.
    fn r1_fourier(s: f64, t: f64, terms: usize) -> f64 {
        let series = |x: f64, r: i32| -> f64 {
            (1..=terms)
                .rev()
                .map(|k| {
                    let w = 2.0 * PI * k as f64;
                    (w * x).cos() / w.powi(r)
                })
                .sum::<f64>()
        };
        let k2s = 2.0 * series(s, 2);
        let k2t = 2.0 * series(t, 2);
        let k4d = -2.0 * series((s - t).abs(), 4);
        k2s * k2t - k4d
    }

    fn random_sample(n: usize, p: usize, seed: u64) -> FunctionalSample {
        let grid = Arc::new(Grid::uniform(p).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
                grid.points()
                    .iter()
                    .map(|&t| a[0] + a[1] * t + a[2] * (3.0 * t).sin() + a[3] * (7.0 * t).cos())
                    .collect()
            })
            .collect();
        let y = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        FunctionalSample::from_rows(grid, &rows, y).unwrap()
    }

    #[test]
    fn kernel_origin_value() {
        // k2(0)² - k4(0) = 1/144 + 1/720
        assert_abs_diff_eq!(kernel_r1(0.0, 0.0).unwrap(), 1.0 / 120.0, epsilon = 1e-17);
        assert_abs_diff_eq!(k2(0.0), 1.0 / 12.0, epsilon = 1e-16);
        assert_abs_diff_eq!(k4(0.0), -1.0 / 720.0, epsilon = 1e-16);
    }

    #[test]
    fn kernel_symmetry_and_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let s: f64 = rng.random();
            let t: f64 = rng.random();
            assert_eq!(kernel_r1(s, t).unwrap(), kernel_r1(t, s).unwrap());
        }
        assert!(matches!(kernel_r1(-0.1, 0.5), Err(FlqrError::DomainError(_))));
        assert!(matches!(kernel_r1(0.5, 1.5), Err(FlqrError::DomainError(_))));
    }

    #[test]
    fn kernel_matches_fourier_expansion() {
        for &(s, t) in &[(0.3, 0.7), (0.15, 0.4), (0.9, 0.35)] {
            let oracle = r1_fourier(s, t, 200_000);
            assert_abs_diff_eq!(kernel_r1(s, t).unwrap(), oracle, epsilon = 1e-8);
        }
    }

    /// ∂²/∂s² R1(s, t) = k2(t) - k2(|s - t|).
    fn r1_dss(s: f64, t: f64) -> f64 {
        k2(t) - k2((s - t).abs())
    }

    #[test]
    fn reproducing_property_through_penalty() {
        // J(R1(t,.), R1(u,.)) = ∫ ∂²R1(s,t) ∂²R1(s,u) ds must reproduce R1(t,u).
        // The integrand is piecewise quadratic with kinks at t and u; Simpson on a
        // grid containing both is exact.
        let m = 2000;
        let grid: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
        let pairs = [(0.2, 0.6), (0.35, 0.35), (0.05, 0.95), (0.5, 0.75)];
        for &(t, u) in &pairs {
            let f = |s: f64| r1_dss(s, t) * r1_dss(s, u);
            let mut acc = 0.0;
            for w in grid.windows(2) {
                let (a, b) = (w[0], w[1]);
                acc += (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
            }
            assert_abs_diff_eq!(acc, kernel_r1(t, u).unwrap(), epsilon = 1e-10);
        }
    }

    #[test]
    fn reproducing_property_on_span() {
        // f = Σ a_k R1(t_k, .) on a 201-point grid; <R1(t, .), f>_H1 = Σ a_k R1(t, t_k)
        // evaluated through the kernel Gram must equal direct evaluation of f.
        let grid = Arc::new(Grid::uniform(201).unwrap());
        let kern = SobolevKernel::cubic(grid.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let anchors: Vec<usize> = (0..10).map(|_| rng.random_range(0..201)).collect();
        let coef: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        for j in (0..201).step_by(20) {
            let via_gram: f64 = anchors
                .iter()
                .zip(&coef)
                .map(|(&k, a)| a * kern.r1()[(j, k)])
                .sum();
            let t = grid.points()[j];
            let direct: f64 = anchors
                .iter()
                .zip(&coef)
                .map(|(&k, a)| a * kernel_r1(grid.points()[k], t).unwrap())
                .sum();
            assert_abs_diff_eq!(via_gram, direct, epsilon = 1e-6);
        }
    }

    #[test]
    fn r1_matrix_is_psd() {
        let grid = Arc::new(Grid::uniform(101).unwrap());
        let kern = SobolevKernel::cubic(grid).unwrap();
        let eig = SymmetricEigen::new(kern.r1().clone());
        let norm = kern.r1().norm();
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10 * norm));
    }

    #[test]
    fn sections_of_special_curves() {
        let grid = Arc::new(Grid::uniform(51).unwrap());
        let kern = SobolevKernel::cubic(grid.clone()).unwrap();
        let zero = vec![0.0; 51];
        let one = vec![1.0; 51];
        let s = FunctionalSample::from_rows(grid.clone(), &[zero, one.clone(), one], vec![0.0, 1.0, 2.0])
            .unwrap();
        let xi = xi_functions(&s, &kern).unwrap();
        assert!(xi[0].values().iter().all(|&v| v == 0.0));
        assert_eq!(xi[1].values(), xi[2].values());
        // X = 1: ξ(t) = trapezoid quadrature of the kernel row R1(t, .)
        let w = grid.weights();
        for (j, &t) in grid.points().iter().enumerate() {
            let oracle: f64 = grid
                .points()
                .iter()
                .zip(w)
                .map(|(&s, wk)| wk * kernel_r1(t, s).unwrap())
                .sum();
            assert_abs_diff_eq!(xi[1].values()[j], oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn gram_of_constant_curve_matches_nested_quadrature() {
        let grid = Arc::new(Grid::uniform(101).unwrap());
        let kern = SobolevKernel::cubic(grid.clone()).unwrap();
        let s = FunctionalSample::from_rows(grid.clone(), &[vec![1.0; 101], vec![0.0; 101]], vec![0.0, 0.0])
            .unwrap();
        let gram = build_gram(&s, &kern).unwrap();
        let w = grid.weights();
        let pts = grid.points();
        let mut nested = 0.0;
        for (a, wa) in pts.iter().zip(w) {
            let mut inner = 0.0;
            for (b, wb) in pts.iter().zip(w) {
                inner += wb * kernel_r1(*a, *b).unwrap();
            }
            nested += wa * inner;
        }
        assert_abs_diff_eq!(gram.xi()[(0, 0)], nested, epsilon = 1e-8);
        // R1 integrates to zero in each argument, so the continuous value is 0.
        assert_abs_diff_eq!(gram.xi()[(0, 0)], 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(gram.null_scores()[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gram.null_scores()[(0, 1)], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let s = random_sample(15, 41, 9);
        let kern = SobolevKernel::cubic(s.grid().clone()).unwrap();
        let gram = build_gram(&s, &kern).unwrap();
        let xi = gram.xi();
        assert_eq!(xi, &xi.transpose());
        let norm = xi.norm();
        let eig = SymmetricEigen::new(xi.clone());
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10 * norm));
        assert_eq!(gram.s(), gram.xi());
    }

    #[test]
    fn gram_is_permutation_equivariant() {
        let s = random_sample(8, 31, 21);
        let kern = SobolevKernel::cubic(s.grid().clone()).unwrap();
        let perm = [3, 0, 7, 1, 6, 2, 5, 4];
        let g = build_gram(&s, &kern).unwrap();
        let gp = build_gram(&s.select(&perm).unwrap(), &kern).unwrap();
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                assert_abs_diff_eq!(gp.xi()[(a, b)], g.xi()[(pa, pb)], epsilon = 1e-15);
            }
            for l in 0..2 {
                assert_eq!(gp.null_scores()[(a, l)], g.null_scores()[(pa, l)]);
            }
        }
    }

    #[test]
    fn gram_equals_section_pairings() {
        // Ξ_ij = ∫ X_i ξ_j on the grid, which keeps fitted values consistent
        // with the assembled coefficient function.
        let s = random_sample(6, 51, 2);
        let kern = SobolevKernel::cubic(s.grid().clone()).unwrap();
        let g = build_gram(&s, &kern).unwrap();
        let c = DVector::from_vec(vec![0.3, -1.0, 0.5, 2.0, 0.0, -0.7]);
        let beta = g.assemble_beta(&[0.0, 0.0], c.as_slice());
        let fitted = g.xi() * &c;
        for i in 0..6 {
            let direct = s.grid().integrate_values(
                &s.curve_values(i).iter().zip(&beta).map(|(x, b)| x * b).collect::<Vec<_>>(),
            );
            assert_abs_diff_eq!(direct, fitted[i], epsilon = 1e-13);
        }
    }
}
