use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input shape error: expected a point of {expected}, got {got}")]
    InputShape { expected: String, got: String },
    #[error("composition type error: {0}")]
    CompositionType(String),
    #[error("enumeration unsupported: {0}")]
    UnsupportedEnumeration(String),
    #[error("group type error: {0}")]
    GroupMismatch(String),
    #[error("singular element: |det| = {det:e} is below the threshold")]
    Singular { det: f64 },
    #[error("group {0} has no Haar sampler (not compact)")]
    NoHaar(String),
    #[error("invalid semidirect product: twist breaks compatibility by {err:e}")]
    InvalidSemidirect { err: f64 },
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate projection: columns are nearly dependent (ratio {ratio:e})")]
    DegenerateProjection { ratio: f64 },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("stale cache: forward pass used parameter generation {cached}, current is {current}")]
    StaleCache { cached: u64, current: u64 },
    #[error("equivariance violation: {0}")]
    NotEquivariant(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
