use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use flqr::estimator::{FitConfig, FitResult, QuantileCurveFamily};
use flqr::funcdata::{FunctionalSample, Grid};
use serde::{Deserialize, Serialize};

use crate::args::FORMAT_REV;
use crate::CliError;

/// The training sample, embedded so inference commands need only the artifact.
#[derive(Debug, Serialize, Deserialize)]
pub struct SampleData {
    pub grid: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    pub responses: Vec<f64>,
}

impl SampleData {
    pub fn from_sample(s: &FunctionalSample) -> Self {
        SampleData {
            grid: s.grid().points().to_vec(),
            curves: (0..s.n()).map(|i| s.curve_values(i)).collect(),
            responses: s.responses().iter().copied().collect(),
        }
    }

    pub fn to_sample(&self) -> Result<FunctionalSample, CliError> {
        let grid = Arc::new(Grid::new(self.grid.clone())?);
        Ok(FunctionalSample::from_rows(grid, &self.curves, self.responses.clone())?)
    }
}

/// What `fit` writes: one fit or a family of fits, plus the data behind them.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitArtifact {
    pub format_rev: u32,
    pub config: FitConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub family: Option<QuantileCurveFamily>,
    pub sample: SampleData,
}

impl FitArtifact {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.is_file() {
            return Err(CliError::Io(format!("{}: no such file", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let art: FitArtifact = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{} is not a fit artifact: {e}", path.display())))?;
        if art.format_rev != FORMAT_REV {
            return Err(CliError::Usage(format!(
                "{} has format rev {}, this build reads rev {FORMAT_REV}",
                path.display(),
                art.format_rev
            )));
        }
        Ok(art)
    }

    /// Successful fits in level order.
    pub fn fits(&self) -> Vec<&FitResult> {
        match (&self.fit, &self.family) {
            (Some(f), _) => vec![f],
            (None, Some(fam)) => fam.fits.iter().flatten().collect(),
            (None, None) => Vec::new(),
        }
    }
}

/// Writes to `path` through a sibling temporary file and a rename, or to stdout.
pub fn emit(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(content.as_bytes())
            .and_then(|_| out.flush())
            .map_err(|e| CliError::Io(e.to_string()));
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(content.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Prefixes every data row of `csv` with `key` and the header with `name`.
pub fn prefix_column(name: &str, key: &str, csv: &str, with_header: bool) -> String {
    let mut lines = csv.lines();
    let mut s = String::new();
    if let Some(h) = lines.next() {
        if with_header {
            s.push_str(&format!("{name},{h}\n"));
        }
    }
    for l in lines {
        s.push_str(&format!("{key},{l}\n"));
    }
    s
}
