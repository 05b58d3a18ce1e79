use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of an operation (e.g. a position
    /// outside the survey area).
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller broke a precondition.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("data corruption: {0}")]
    DataCorruption(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line harness: 2 for input and
    /// contract errors, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_)
            | Error::Parse { .. }
            | Error::Incompatible(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::Domain(_) => 2,
            Error::DataCorruption(_)
            | Error::Diverged { .. }
            | Error::Generation(_)
            | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
