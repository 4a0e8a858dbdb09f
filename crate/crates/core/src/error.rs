use thiserror::Error;

/// Errors produced by the cancellation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence is empty")]
    EmptySequence,

    #[error("sequence has zero average power")]
    ZeroPower,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid basis order {order}: orders must be odd and >= 1")]
    InvalidOrder { order: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sequence of length {len} is shorter than the {needed} samples required")]
    SequenceTooShort { len: usize, needed: usize },

    #[error(
        "pilot measurement matrix has {rows} rows but {columns} columns; \
         the pilot needs L_p - L_h + 1 >= L_w"
    )]
    PilotTooShort { rows: usize, columns: usize },

    #[error("matrix is numerically rank deficient (condition estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation not supported: {0}")]
    Unsupported(&'static str),

    #[error("spectrum has no positive eigenvalue")]
    DegenerateSpectrum,

    #[error("eigenvalue {value:.3e} is too negative for a PSD matrix (lambda_max {lambda_max:.3e})")]
    NotPsd { value: f64, lambda_max: f64 },

    #[error("Gram matrix is singular")]
    Singular,

    #[error("truth bundle belongs to run {expected} but the estimate came from run {found}")]
    RunMismatch { expected: u64, found: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
