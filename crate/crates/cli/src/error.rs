use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mcwf_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Wav { path: PathBuf, detail: String },
    #[error("{path}: {detail}")]
    Json { path: PathBuf, detail: String },
    #[error("sample rate mismatch: {path} is {found} Hz, expected {expected} Hz")]
    RateMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("oracle mode needs a scene manifest, none found at {0}")]
    MissingManifest(PathBuf),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid arguments: {0}")]
    Usage(String),
    #[error("gradient check failed for: {0}")]
    GradcheckFailed(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 0 success, 1 validation/config/IO error, 2 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 2,
            CliError::GradcheckFailed(_) => 2,
            _ => 1,
        }
    }
}
