//! Functional-data containers, trapezoid quadrature and CSV ingestion.
//!
//! Every curve in a sample is observed on one shared [`Grid`] spanning
//! `[0, 1]`. Integrals over the domain use composite trapezoid weights
//! attached to the grid, so `integrate` and every Gram matrix built from
//! it share the same rule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FlqrError, Result};

/// Ordered abscissae in `[0, 1]` with cached trapezoid weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub const MIN_POINTS: usize = 4;

    /// Validates a grid: strictly increasing, starts at 0, ends at 1, at least 4 points.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(FlqrError::GridInvalid(format!(
                "need at least {} points, got {}",
                Self::MIN_POINTS,
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(FlqrError::GridInvalid("non-finite abscissa".into()));
        }
        if let Some(k) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(FlqrError::GridInvalid(format!(
                "abscissae not strictly increasing at position {}",
                k + 1
            )));
        }
        if points[0] != 0.0 || points[points.len() - 1] != 1.0 {
            return Err(FlqrError::GridInvalid(format!(
                "grid must span [0, 1], got [{}, {}]",
                points[0],
                points[points.len() - 1]
            )));
        }
        let weights = trapezoid_weights(&points);
        Ok(Grid { points, weights })
    }

    /// Equispaced grid with `p` points on `[0, 1]`.
    pub fn uniform(p: usize) -> Result<Self> {
        if p < Self::MIN_POINTS {
            return Err(FlqrError::GridInvalid(format!(
                "need at least {} points, got {p}",
                Self::MIN_POINTS
            )));
        }
        let last = (p - 1) as f64;
        let points = (0..p).map(|j| j as f64 / last).collect();
        Grid::new(points)
    }

    /// Maps strictly increasing abscissae affinely onto `[0, 1]`.
    pub fn rescaled(raw: &[f64]) -> Result<Self> {
        if raw.len() < Self::MIN_POINTS {
            return Err(FlqrError::GridInvalid(format!(
                "need at least {} points, got {}",
                Self::MIN_POINTS,
                raw.len()
            )));
        }
        if let Some(k) = raw.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(FlqrError::GridInvalid(format!(
                "abscissae not strictly increasing at position {}",
                k + 1
            )));
        }
        let (lo, hi) = (raw[0], raw[raw.len() - 1]);
        if lo == 0.0 && hi == 1.0 {
            return Grid::new(raw.to_vec());
        }
        let span = hi - lo;
        let mut points: Vec<f64> = raw.iter().map(|t| (t - lo) / span).collect();
        let last = points.len() - 1;
        points[0] = 0.0;
        points[last] = 1.0;
        Grid::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoid integral of values sampled on this grid. No validation.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// Index of the grid point equal to `t` (within 1e-12), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points.iter().position(|s| (s - t).abs() <= 1e-12)
    }

    /// Piecewise-linear interpolation of grid values at `t`.
    pub fn interpolate(&self, values: &[f64], t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0] {
            return values[0];
        }
        if t >= pts[pts.len() - 1] {
            return values[values.len() - 1];
        }
        let hi = pts.partition_point(|s| *s < t);
        if pts[hi] == t {
            return values[hi];
        }
        let lo = hi - 1;
        let frac = (t - pts[lo]) / (pts[hi] - pts[lo]);
        values[lo] + frac * (values[hi] - values[lo])
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.points == other.points
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = FlqrError;
    fn try_from(points: Vec<f64>) -> Result<Self> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.points
    }
}

fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let p = points.len();
    let mut w = vec![0.0; p];
    for j in 0..p - 1 {
        let half = 0.5 * (points[j + 1] - points[j]);
        w[j] += half;
        w[j + 1] += half;
    }
    w
}

/// A function sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FlqrError::DimensionMismatch(format!(
                "grid has {} points, values have {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FlqrError::InvalidInput("non-finite function value".into()));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples a closure on the grid.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        GridFunction::new(grid, values)
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Result<Self> {
        let values = vec![c; grid.len()];
        GridFunction::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at `t`: exact at grid points, linear interpolation elsewhere.
    pub fn eval(&self, t: f64) -> f64 {
        self.grid.interpolate(&self.values, t)
    }

    pub fn scaled(&self, a: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    /// Pointwise `a*self + b*other`.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        if !self.grid.same_as(&other.grid) {
            return Err(FlqrError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(GridFunction {
            grid: self.grid.clone(),
            values,
        })
    }
}

/// Composite trapezoid value of the integral of `f` over `[0, 1]`.
pub fn integrate(f: &GridFunction) -> Result<f64> {
    if f.values.iter().any(|v| !v.is_finite()) {
        return Err(FlqrError::InvalidInput("non-finite function value".into()));
    }
    Ok(f.grid.integrate_values(&f.values))
}

/// L2 pairing of two functions on the same grid.
pub fn inner_l2(f: &GridFunction, g: &GridFunction) -> Result<f64> {
    if !f.grid.same_as(&g.grid) {
        return Err(FlqrError::GridMismatch);
    }
    Ok(f.grid
        .weights()
        .iter()
        .zip(f.values.iter().zip(&g.values))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// `n` curves on a shared grid plus their scalar responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRepr", into = "SampleRepr")]
pub struct FunctionalSample {
    grid: Arc<Grid>,
    /// n x p, row i holds X_i on the grid.
    curves: DMatrix<f64>,
    responses: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct SampleRepr {
    grid: Grid,
    curves: Vec<Vec<f64>>,
    responses: Vec<f64>,
}

impl TryFrom<SampleRepr> for FunctionalSample {
    type Error = FlqrError;
    fn try_from(r: SampleRepr) -> Result<Self> {
        FunctionalSample::from_rows(Arc::new(r.grid), &r.curves, r.responses)
    }
}

impl From<FunctionalSample> for SampleRepr {
    fn from(s: FunctionalSample) -> Self {
        SampleRepr {
            grid: (*s.grid).clone(),
            curves: (0..s.n()).map(|i| s.curve_values(i)).collect(),
            responses: s.responses.iter().copied().collect(),
        }
    }
}

impl FunctionalSample {
    pub const MIN_CURVES: usize = 2;

    pub fn new(grid: Arc<Grid>, curves: DMatrix<f64>, responses: DVector<f64>) -> Result<Self> {
        let (n, p) = curves.shape();
        if p != grid.len() {
            return Err(FlqrError::DimensionMismatch(format!(
                "curves have {p} columns, grid has {} points",
                grid.len()
            )));
        }
        if responses.len() != n {
            return Err(FlqrError::DimensionMismatch(format!(
                "{n} curves but {} responses",
                responses.len()
            )));
        }
        if n < Self::MIN_CURVES {
            return Err(FlqrError::InvalidInput(format!(
                "need at least {} curves, got {n}",
                Self::MIN_CURVES
            )));
        }
        for i in 0..n {
            if curves.row(i).iter().any(|v| !v.is_finite()) {
                return Err(FlqrError::InvalidInput(format!(
                    "curve {i} has a non-finite value"
                )));
            }
        }
        if let Some(i) = responses.iter().position(|v| !v.is_finite()) {
            return Err(FlqrError::InvalidInput(format!(
                "response {i} is not finite"
            )));
        }
        Ok(FunctionalSample {
            grid,
            curves,
            responses,
        })
    }

    pub fn from_rows(grid: Arc<Grid>, rows: &[Vec<f64>], responses: Vec<f64>) -> Result<Self> {
        let p = grid.len();
        if let Some(i) = rows.iter().position(|r| r.len() != p) {
            return Err(FlqrError::DimensionMismatch(format!(
                "curve {i} has {} values, grid has {p} points",
                rows[i].len()
            )));
        }
        let curves = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        FunctionalSample::new(grid, curves, DVector::from_vec(responses))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn curves(&self) -> &DMatrix<f64> {
        &self.curves
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn n(&self) -> usize {
        self.curves.nrows()
    }

    pub fn p(&self) -> usize {
        self.curves.ncols()
    }

    pub fn curve_values(&self, i: usize) -> Vec<f64> {
        self.curves.row(i).iter().copied().collect()
    }

    pub fn curve(&self, i: usize) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.curve_values(i),
        }
    }

    /// Sample with the responses replaced.
    pub fn with_responses(&self, responses: DVector<f64>) -> Result<Self> {
        FunctionalSample::new(self.grid.clone(), self.curves.clone(), responses)
    }

    /// Sub-sample with the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        let curves = self.curves.select_rows(rows);
        let responses = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.responses[i]));
        FunctionalSample::new(self.grid.clone(), curves, responses)
    }
}

fn parse_field(field: &str, line: usize, row: usize) -> Result<f64> {
    let s = field.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Err(FlqrError::ParseError {
            line,
            message: format!("missing value in row {row}"),
        });
    }
    let v: f64 = s.parse().map_err(|_| FlqrError::ParseError {
        line,
        message: format!("cannot parse '{s}' as a number"),
    })?;
    if !v.is_finite() {
        return Err(FlqrError::ParseError {
            line,
            message: format!("non-finite value in row {row}"),
        });
    }
    Ok(v)
}

/// Reads a curves CSV: the first record is the grid, each further record one curve.
///
/// A strictly increasing grid that does not span `[0, 1]` is rescaled
/// affinely onto it.
pub fn load_curves(path: &Path) -> Result<(Arc<Grid>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FlqrError::Io(e.to_string()))?;
    let mut grid: Option<Arc<Grid>> = None;
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| FlqrError::ParseError {
            line: k + 1,
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(k + 1);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match &grid {
            None => {
                let raw = record
                    .iter()
                    .map(|f| parse_field(f, line, 0))
                    .collect::<Result<Vec<_>>>()?;
                grid = Some(Arc::new(Grid::rescaled(&raw)?));
            }
            Some(g) => {
                let row = rows.len();
                if record.len() != g.len() {
                    return Err(FlqrError::DimensionMismatch(format!(
                        "line {line}: curve {row} has {} values, grid has {}",
                        record.len(),
                        g.len()
                    )));
                }
                let vals = record
                    .iter()
                    .map(|f| parse_field(f, line, row))
                    .collect::<Result<Vec<_>>>()?;
                rows.push(vals);
            }
        }
    }
    let grid = grid.ok_or_else(|| FlqrError::ParseError {
        line: 1,
        message: "empty curves file".into(),
    })?;
    Ok((grid, rows))
}

/// Reads a responses file with one value per line.
pub fn load_responses(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let s = line.trim().trim_end_matches(',');
        if s.is_empty() {
            continue;
        }
        out.push(parse_field(s, k + 1, out.len())?);
    }
    Ok(out)
}

/// Loads and validates a sample from a curves CSV and a responses file.
pub fn load_sample(curves_path: &Path, responses_path: &Path) -> Result<FunctionalSample> {
    let (grid, rows) = load_curves(curves_path)?;
    let responses = load_responses(responses_path)?;
    if rows.len() != responses.len() {
        return Err(FlqrError::DimensionMismatch(format!(
            "{} curves but {} responses",
            rows.len(),
            responses.len()
        )));
    }
    FunctionalSample::from_rows(grid, &rows, responses)
}

/// Writes a curves CSV (grid header row, one curve per row).
pub fn write_curves<W: Write>(out: W, grid: &Grid, rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{}", join(grid.points()))?;
    for r in rows {
        writeln!(w, "{}", join(&r))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a sample in the format read by [`load_sample`].
pub fn save_sample(sample: &FunctionalSample, curves_path: &Path, responses_path: &Path) -> Result<()> {
    write_curves(
        File::create(curves_path)?,
        sample.grid(),
        (0..sample.n()).map(|i| sample.curve_values(i)),
    )?;
    let mut w = BufWriter::new(File::create(responses_path)?);
    for y in sample.responses().iter() {
        writeln!(w, "{y}")?;
    }
    w.flush()?;
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid(p: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(p).unwrap())
    }

    #[test]
    fn integrate_constant_is_one() {
        for p in [4, 17, 101] {
            let f = GridFunction::constant(grid(p), 1.0).unwrap();
            assert_abs_diff_eq!(integrate(&f).unwrap(), 1.0, epsilon = 1e-14);
        }
        let g = Arc::new(Grid::new(vec![0.0, 0.1, 0.15, 0.7, 1.0]).unwrap());
        let f = GridFunction::constant(g, 1.0).unwrap();
        assert_abs_diff_eq!(integrate(&f).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn integrate_linear_and_quadratic() {
        let g = grid(101);
        let f = GridFunction::from_fn(g.clone(), |t| t).unwrap();
        assert_abs_diff_eq!(integrate(&f).unwrap(), 0.5, epsilon = 1e-14);
        // trapezoid error is h^2/12 * max|f''| = 1e-4 / 6
        let f = GridFunction::from_fn(g, |t| t * t).unwrap();
        assert_abs_diff_eq!(integrate(&f).unwrap(), 1.0 / 3.0, epsilon = 2e-5);
    }

    #[test]
    fn inner_products_on_fine_grid() {
        let g = grid(201);
        let s = GridFunction::from_fn(g.clone(), |t| (2.0 * PI * t).sin()).unwrap();
        let c = GridFunction::from_fn(g.clone(), |t| (2.0 * PI * t).cos()).unwrap();
        assert_abs_diff_eq!(inner_l2(&s, &c).unwrap(), 0.0, epsilon = 1e-6);
        let e = GridFunction::from_fn(g.clone(), |t| 2f64.sqrt() * (PI * t).cos()).unwrap();
        assert_abs_diff_eq!(inner_l2(&e, &e).unwrap(), 1.0, epsilon = 1e-4);
        let one = GridFunction::constant(g, 1.0).unwrap();
        assert_abs_diff_eq!(inner_l2(&one, &one).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn inner_l2_rejects_other_grid() {
        let a = GridFunction::constant(grid(11), 1.0).unwrap();
        let b = GridFunction::constant(grid(12), 1.0).unwrap();
        assert_eq!(inner_l2(&a, &b), Err(FlqrError::GridMismatch));
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let g = grid(5);
        let f = GridFunction {
            grid: g,
            values: vec![0.0, f64::NAN, 0.0, 0.0, 0.0],
        };
        assert!(matches!(integrate(&f), Err(FlqrError::InvalidInput(_))));
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(vec![0.0, 0.5, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.5, 0.4, 1.0]).is_err());
        assert!(Grid::new(vec![0.1, 0.2, 0.5, 1.0]).is_err());
        let g = Grid::rescaled(&[2.0, 3.0, 4.0, 6.0]).unwrap();
        assert_eq!(g.points(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn sample_requires_two_curves() {
        let g = grid(5);
        let err = FunctionalSample::from_rows(g, &[vec![0.0; 5]], vec![1.0]).unwrap_err();
        assert!(matches!(err, FlqrError::InvalidInput(_)));
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_three_curves() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "x.csv",
            "0,0.25,0.5,0.75,1\n1,2,3,4,5\n0,0,0,0,0\n-1,0.5,2,1e-3,7\n",
        );
        let y = write(dir.path(), "y.csv", "1.5\n-2\n3\n");
        let s = load_sample(&c, &y).unwrap();
        assert_eq!((s.n(), s.p()), (3, 5));
        assert_eq!(s.curve_values(2), vec![-1.0, 0.5, 2.0, 1e-3, 7.0]);
        assert_eq!(s.responses().as_slice(), &[1.5, -2.0, 3.0]);
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "x.csv", "0,0.5,0.25,0.75,1\n1,2,3,4,5\n1,2,3,4,5\n");
        let y = write(dir.path(), "y.csv", "1\n2\n");
        assert!(matches!(load_sample(&c, &y), Err(FlqrError::GridInvalid(_))));

        let rows = "0,0.25,0.5,0.75,1\n".to_string() + &"1,2,3,4,5\n".repeat(5);
        let c = write(dir.path(), "x5.csv", &rows);
        let y = write(dir.path(), "y4.csv", "1\n2\n3\n4\n");
        assert!(matches!(
            load_sample(&c, &y),
            Err(FlqrError::DimensionMismatch(_))
        ));

        let c = write(dir.path(), "xna.csv", "0,0.25,0.5,0.75,1\n1,2,3,4,5\n1,NA,3,4,5\n");
        let y = write(dir.path(), "y2.csv", "1\n2\n");
        match load_sample(&c, &y) {
            Err(FlqrError::ParseError { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("row 1"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }

        let c = write(dir.path(), "xbad.csv", "0,0.25,0.5,0.75,1\n1,2,x,4,5\n1,2,3,4,5\n");
        assert!(matches!(
            load_sample(&c, &y),
            Err(FlqrError::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let g = grid(6);
        let s = FunctionalSample::from_rows(
            g,
            &[vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], vec![1.0; 6]],
            vec![0.5, -0.25],
        )
        .unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: FunctionalSample = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
