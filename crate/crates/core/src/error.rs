use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("domain error in {op}: {detail}")]
    DomainError { op: &'static str, detail: String },
    #[error("singular matrix (pivot magnitude {pivot:e} at batch element {batch})")]
    SingularMatrix { batch: usize, pivot: f64 },
    #[error("matrix is not Hermitian (asymmetry {asymmetry:e} at batch element {batch})")]
    NonHermitian { batch: usize, asymmetry: f64 },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tensor does not belong to this tape")]
    DetachedTensor,
    #[error("signal too short: {samples} samples, need at least {required}")]
    TooShort { samples: usize, required: usize },
    #[error("non-finite value in {0}")]
    NonFiniteInput(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("mask column at frequency {freq} sums to {sum:e}")]
    ZeroMaskColumn { freq: usize, sum: f64 },
    #[error("negative power spectral density {value:e} at flat index {index}")]
    NegativePsd { index: usize, value: f64 },
    #[error("spectrogram configurations or lengths differ")]
    ConfigMismatch,
    #[error("zero-energy signal: {0}")]
    ZeroEnergy(&'static str),
    #[error("expected {expected} sources, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("no frame of the reference exceeds the silence threshold")]
    NoVoicedFrames,
    #[error("noise SCM not invertible at frequency {freq}")]
    SingularNoiseScm { freq: usize },
    #[error("power iteration failed at frequency {freq}: {detail}")]
    EigenFailure { freq: usize, detail: String },
    #[error("non-finite loss; first non-finite tensor: {0}")]
    NonFiniteLoss(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input or config).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularMatrix { .. }
                | Error::DomainError { .. }
                | Error::SingularNoiseScm { .. }
                | Error::EigenFailure { .. }
                | Error::NonFiniteLoss(_)
        )
    }
}
