use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variant name is what the CLI prints on numerical failure, so keep
/// the names stable.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum FlqrError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid mismatch: functions live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    GridInvalid(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("argument outside its domain: {0}")]
    DomainError(String),

    #[error("Barzilai-Borwein step undefined: <delta, g> = 0")]
    SafeguardTrigger,

    #[error("optimizer diverged at iteration {iteration}: non-finite objective")]
    DivergenceError { iteration: usize },

    #[error("degenerate bandwidth: residual scale estimate is zero")]
    DegenerateBandwidth,

    #[error("fit failed for lambda = {lambda:e} on fold {fold}: {message}")]
    FoldFailure {
        lambda: f64,
        fold: usize,
        message: String,
    },

    #[error("cross-validation failed: every lambda in the grid was excluded")]
    TuningFailure,

    #[error("invalid tau grid: {0}")]
    InvalidTauGrid(String),

    #[error("eigen-system failure: {0}")]
    SpectrumFailure(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("insufficient simulated paths: {got} < {min}")]
    InsufficientPaths { got: usize, min: usize },

    #[error("io error: {0}")]
    Io(String),
}

impl FlqrError {
    /// Short variant name, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            FlqrError::InvalidInput(_) => "InvalidInput",
            FlqrError::GridMismatch => "GridMismatch",
            FlqrError::GridInvalid(_) => "GridInvalid",
            FlqrError::ParseError { .. } => "ParseError",
            FlqrError::DimensionMismatch(_) => "DimensionMismatch",
            FlqrError::DomainError(_) => "DomainError",
            FlqrError::SafeguardTrigger => "SafeguardTrigger",
            FlqrError::DivergenceError { .. } => "DivergenceError",
            FlqrError::DegenerateBandwidth => "DegenerateBandwidth",
            FlqrError::FoldFailure { .. } => "FoldFailure",
            FlqrError::TuningFailure => "TuningFailure",
            FlqrError::InvalidTauGrid(_) => "InvalidTauGrid",
            FlqrError::SpectrumFailure(_) => "SpectrumFailure",
            FlqrError::ConfigMismatch(_) => "ConfigMismatch",
            FlqrError::InsufficientPaths { .. } => "InsufficientPaths",
            FlqrError::Io(_) => "Io",
        }
    }

    /// Whether the error stems from bad input rather than a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            FlqrError::InvalidInput(_)
                | FlqrError::GridMismatch
                | FlqrError::GridInvalid(_)
                | FlqrError::ParseError { .. }
                | FlqrError::DimensionMismatch(_)
                | FlqrError::DomainError(_)
                | FlqrError::InvalidTauGrid(_)
                | FlqrError::ConfigMismatch(_)
                | FlqrError::InsufficientPaths { .. }
                | FlqrError::Io(_)
        )
    }
}

impl From<std::io::Error> for FlqrError {
    fn from(e: std::io::Error) -> Self {
        FlqrError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlqrError>;
