use thiserror::Error;

/// Errors surfaced by the solver, training loop and run front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("integration failed at t = {t}: {reason} (state norm {state_norm})")]
    Integration {
        t: f64,
        state_norm: f64,
        reason: String,
    },

    #[error("non-finite loss at epoch {epoch}: {component}")]
    NonFinite { epoch: usize, component: String },

    #[error("run {run_id} aborted: {message}")]
    RunAborted { run_id: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl Error {
    /// Stable short name for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Integration { .. } => "integration",
            Error::NonFinite { .. } => "non_finite",
            Error::RunAborted { .. } => "run_aborted",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
