use thiserror::Error;

/// Failures of the dense kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("dimension mismatch")]
    DimensionMismatch,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("frequency bin {freq}: {source}")]
    AtFrequency { freq: usize, source: LinalgError },
    #[error("all frames are zero at frequency bin {freq}")]
    AllFramesZero { freq: usize },
    #[error("signal too short: {len} samples, frame length {frame_len}")]
    TooShort { len: usize, frame_len: usize },
    #[error("stft config mismatch: {0}")]
    ConfigMismatch(String),
    #[error("spatial image is zero at frequency bin {freq}")]
    ZeroImage { freq: usize },
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no well-conditioned mixing system after {0} draws")]
    IllConditioned(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn at(freq: usize) -> impl Fn(LinalgError) -> Error {
        move |source| Error::AtFrequency { freq, source }
    }

    /// True for aborts caused by a singular demixing or covariance block.
    pub fn is_singular(&self) -> bool {
        matches!(
            self,
            Error::Linalg(LinalgError::SingularMatrix | LinalgError::NotPositiveDefinite)
                | Error::AtFrequency { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
