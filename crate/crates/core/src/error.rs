use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("map is not completely positive (min eigenvalue {0:.3e})")]
    NotCompletelyPositive(f64),
    #[error("map is not trace preserving (deviation {0:.3e})")]
    NotTracePreserving(f64),
    #[error("map is not unital (deviation {0:.3e})")]
    NotUnital(f64),
    #[error("Choi matrix has trace {got}, expected {expected}")]
    BadTrace { expected: f64, got: f64 },
    #[error("Kraus set is empty")]
    EmptyKraus,
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("wrong number of angles: expected {expected}, got {got}")]
    WrongAngleCount { expected: usize, got: usize },
    #[error("Choi matrix is rank deficient (pivot {0:.3e})")]
    RankDeficient(f64),
    #[error("Jacobian is not square ({rows}x{cols})")]
    NonSquareJacobian { rows: usize, cols: usize },
    #[error("Jacobian is singular")]
    SingularJacobian,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid counts: {0}")]
    InvalidCounts(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("step size collapsed below {0:.1e}")]
    StepSizeCollapse(f64),
    #[error("maximum-likelihood value {log_lmax} is below a sampled value {sampled}")]
    BrokenMle { log_lmax: f64, sampled: f64 },
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input rather than numerical breakdown.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidScheme(_)
                | Error::InvalidCounts(_)
                | Error::InvalidPrior(_)
                | Error::InvalidDimension(_)
                | Error::WrongAngleCount { .. }
                | Error::DimensionMismatch { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
