use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("config: {field}: {message}")]
    Schema { field: String, message: String },

    #[error("config: {field}: dimension mismatch (expected {expected}, found {found})")]
    DimensionMismatch {
        field: String,
        expected: String,
        found: String,
    },

    #[error("config: {field}: period must be positive, got {value}")]
    NonPositivePeriod { field: String, value: f64 },

    #[error("time {t} lies outside [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("argument order: expected s <= t, got s = {s}, t = {t}")]
    ArgumentOrder { s: f64, t: f64 },

    #[error("integrator diverged on [{from}, {to}] (norm {norm:e})")]
    Divergence { from: f64, to: f64, norm: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("growth bound {omega} is not negative; the limit measures do not exist")]
    NoLimit { omega: f64 },

    #[error("growth metadata missing; estimate the growth bound first")]
    MissingGrowth,

    #[error("truncation horizon cap {cap} reached with tail bound {bound:e} > {tol:e}")]
    HorizonCap { cap: f64, bound: f64, tol: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("covariance is singular (smallest eigenvalue {min_eig:e})")]
    Singular { min_eig: f64 },

    #[error("measure has no Lebesgue density (covariance rank {rank} < {dim})")]
    NoDensity { rank: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("quadrature budget exceeded: {nodes} nodes > {limit}")]
    Budget { nodes: f64, limit: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("path {path} diverged (|X| = {norm:e})")]
    PathDivergence { path: usize, norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined ratio: denominator {0:e}")]
    UndefinedRatio(f64),

    #[error("unknown check `{0}`")]
    UnknownCheck(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
