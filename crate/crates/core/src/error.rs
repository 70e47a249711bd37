use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate signal: sample variance {variance:e} below threshold")]
    DegenerateSignal { variance: f64 },
    #[error("window of {window} samples exceeds signal length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal is identically zero")]
    ZeroReference,
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),
    #[error("PDF grids do not match")]
    GridMismatch,
    #[error("ill-conditioned source Gram matrix (condition number {0:e})")]
    IllConditioned(f64),
    #[error("unsupported speaker count C = {0}; need C >= 2")]
    UnsupportedC(usize),
    #[error("{fraction:.4} of probability mass falls outside the mixture grid")]
    GridUnderflow { fraction: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no segments available")]
    NoSegments,
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("corrupt container: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than I/O.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Corrupt(_) | Error::CorruptHeader(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
