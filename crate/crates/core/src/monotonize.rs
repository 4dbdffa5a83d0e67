//! Monotonization of conditional-quantile estimates in `τ`.
//!
//! Three steps on a fixed τ-grid: rearrangement (inverting the distribution
//! function induced by the raw path, which on a finite grid is sorting), pool
//! adjacent violators, and a convex combination of the two.

use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};

/// Conditional-quantile estimates `Q(τ_j | x)` on an increasing τ-grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePath {
    taus: Vec<f64>,
    values: Vec<f64>,
}

impl QuantilePath {
    pub fn new(taus: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if taus.len() != values.len() {
            return Err(FlqrError::DimensionMismatch(format!(
                "{} taus but {} values",
                taus.len(),
                values.len()
            )));
        }
        if taus.is_empty() {
            return Err(FlqrError::InvalidInput("empty quantile path".into()));
        }
        if taus.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FlqrError::InvalidTauGrid("taus must be strictly increasing".into()));
        }
        if taus.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(FlqrError::InvalidTauGrid("taus must lie in (0, 1)".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlqrError::InvalidInput("non-finite quantile value".into()));
        }
        Ok(QuantilePath { taus, values })
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] <= w[1])
    }

    fn with_values(&self, values: Vec<f64>) -> QuantilePath {
        QuantilePath {
            taus: self.taus.clone(),
            values,
        }
    }
}

/// Default monotonization grid: 21 equispaced levels on `[0.1, 0.9]`.
pub fn default_tau_grid() -> Vec<f64> {
    (0..21).map(|j| 0.1 + 0.04 * j as f64).collect()
}

/// Quantile rearrangement: the value at rank position `j` is the `j`-th order statistic.
pub fn rearrange(path: &QuantilePath) -> QuantilePath {
    let mut v = path.values.clone();
    v.sort_by(f64::total_cmp);
    path.with_values(v)
}

/// Unit-weight L2 isotonic regression by pooling adjacent violators.
pub fn pava(path: &QuantilePath) -> QuantilePath {
    // Blocks of (sum, count); merge while the last block mean drops below its predecessor.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(path.len());
    for &v in &path.values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / n0 as f64 > s1 / n1 as f64 {
                blocks.pop();
                let last = blocks.len() - 1;
                blocks[last] = (s0 + s1, n0 + n1);
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(path.len());
    for (s, k) in blocks {
        let m = s / k as f64;
        out.extend(std::iter::repeat_n(m, k));
    }
    path.with_values(out)
}

/// `weight * rearrange(path) + (1 - weight) * pava(path)`.
pub fn combine(path: &QuantilePath, weight: f64) -> Result<QuantilePath> {
    if !(0.0..=1.0).contains(&weight) {
        return Err(FlqrError::DomainError(format!(
            "combination weight must lie in [0, 1], got {weight}"
        )));
    }
    let r = rearrange(path);
    let p = pava(path);
    let mut v: Vec<f64> = r
        .values
        .iter()
        .zip(&p.values)
        .map(|(a, b)| weight * a + (1.0 - weight) * b)
        .collect();
    // a convex combination of nondecreasing sequences is nondecreasing; clear
    // last-ulp rounding so the guarantee holds bitwise.
    for j in 1..v.len() {
        if v[j] < v[j - 1] {
            v[j] = v[j - 1];
        }
    }
    Ok(path.with_values(v))
}

/// All three monotone versions of a raw path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonizedPath {
    pub raw: QuantilePath,
    pub rearranged: QuantilePath,
    pub isotonic: QuantilePath,
    pub combined: QuantilePath,
    pub weight: f64,
}

pub fn monotonize(path: &QuantilePath, weight: f64) -> Result<MonotonizedPath> {
    Ok(MonotonizedPath {
        raw: path.clone(),
        rearranged: rearrange(path),
        isotonic: pava(path),
        combined: combine(path, weight)?,
        weight,
    })
}

impl MonotonizedPath {
    /// CSV with columns `tau,raw,rearranged,isotonic,combined`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,raw,rearranged,isotonic,combined\n");
        for j in 0..self.raw.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.raw.taus[j],
                self.raw.values[j],
                self.rearranged.values[j],
                self.isotonic.values[j],
                self.combined.values[j]
            ));
        }
        s
    }
}
