use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numerical,
    Io,
    Schema,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
            ErrorCategory::Schema => "schema",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit needs at least two levels (got {0})")]
    TooFewLevels(usize),
    #[error("expected levels for exactly two modes, got {0}")]
    ModeCount(usize),
    #[error("invalid mode index {0}; expected 1 or 2")]
    InvalidMode(usize),
    #[error("operator spaces do not match: {left:?} vs {right:?}")]
    SpaceMismatch { left: [usize; 2], right: [usize; 2] },
    #[error("matrix of size {rows}x{cols} does not fit a space of dimension {dim}")]
    ShapeMismatch { rows: usize, cols: usize, dim: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("denominator {name} = {value:.6} MHz is inside the pole guard ({guard} MHz)")]
    ResonancePole { name: &'static str, value: f64, guard: f64 },
    #[error("dressed state {label:?} cannot be labeled: best bare overlap {overlap:.3} < {threshold}")]
    LabelAmbiguity { label: (usize, usize), overlap: f64, threshold: f64 },
    #[error("time step {dt_us} us exceeds the stability bound {max_us} us")]
    StepTooLarge { dt_us: f64, max_us: f64 },

    #[error("no oscillation detected (spectral peak SNR {snr:.2} < {threshold})")]
    NoOscillation { snr: f64, threshold: f64 },
    #[error("least-squares fit did not converge: {0}")]
    NonConvergence(String),
    #[error("no prefix of at least {min_points} points reaches R^2 >= {threshold}")]
    RegimeNotFound { min_points: usize, threshold: f64 },
    #[error("plateau needs at least 3 points, found {0}")]
    NoPlateau(usize),
    #[error("theory curve is identically zero")]
    DegenerateTheory,
    #[error("too few valid points: {found} < {required}")]
    TooFewPoints { found: usize, required: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKey(Vec<&'static str>),
    #[error("{path}: missing required column '{column}'")]
    MissingColumn { path: String, column: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            TooFewLevels(_) | ModeCount(_) | InvalidMode(_) | InvalidParameter(_) | Parse { .. }
            | MissingKey(_) => ErrorCategory::Config,
            SpaceMismatch { .. }
            | ShapeMismatch { .. }
            | ResonancePole { .. }
            | LabelAmbiguity { .. }
            | StepTooLarge { .. }
            | NoOscillation { .. }
            | NonConvergence(_)
            | RegimeNotFound { .. }
            | NoPlateau(_)
            | DegenerateTheory
            | TooFewPoints { .. } => ErrorCategory::Numerical,
            MissingColumn { .. } | Schema { .. } => ErrorCategory::Schema,
            Io { .. } | Csv(_) | Checkpoint(_) => ErrorCategory::Io,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
