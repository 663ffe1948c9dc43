use thiserror::Error;

/// Errors raised by the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("computation failed: {0}")]
    Computation(String),

    #[error("matrix is singular or ill-conditioned (condition estimate {cond:e})")]
    Singular { cond: f64 },

    #[error("chernoff family contract violated: {0}")]
    FamilyContract(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("operator generation failed: {0}")]
    Generation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Short machine-readable tag used in CLI error reports and FFI status codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::Computation(_) => "computation",
            Error::Singular { .. } => "singular",
            Error::FamilyContract(_) => "family_contract",
            Error::Fit(_) => "fit",
            Error::Generation(_) => "generation",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
