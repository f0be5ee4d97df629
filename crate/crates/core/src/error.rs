use thiserror::Error;

pub type Result<T> = std::result::Result<T, CalibError>;

#[derive(Debug, Error)]
pub enum CalibError {
    /// Bad configuration: unknown field, unknown objective, invalid hyperparameter.
    #[error("{0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("{0}")]
    Data(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty subset")]
    EmptySubset,

    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("solver did not converge; best bracket [{lo}, {hi}]")]
    Solver { lo: f64, hi: f64 },

    #[error("unsupported model file version {0:?}")]
    Version(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CalibError {
    /// Short machine-readable category, used in `ERR <code>: <message>` lines.
    pub fn code(&self) -> &'static str {
        match self {
            CalibError::Config(_) => "config",
            CalibError::Data(_) | CalibError::Parse { .. } | CalibError::EmptySubset => "data",
            CalibError::Domain(_) | CalibError::Solver { .. } => "numerical",
            CalibError::Fit(_) => "fit",
            CalibError::Version(_) => "version",
            CalibError::Io(_) => "io",
            CalibError::Json(_) | CalibError::Csv(_) => "format",
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CalibError::Config(_) => 2,
            CalibError::Domain(_) | CalibError::Solver { .. } => 4,
            _ => 3,
        }
    }
}
