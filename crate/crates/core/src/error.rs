use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The local speed of the flow vanished, so `ds / speed` is undefined.
    #[error("degenerate speed {speed:e} at node {node:?} (floor {floor:e})")]
    DegenerateSpeed { speed: f64, floor: f64, node: Option<usize> },

    #[error("negative variance {0:e} beyond round-off window (non-Hermitian input?)")]
    NegativeVariance(f64),

    #[error("operator is not Hermitian: max |A - A^H| = {0:e}")]
    NotHermitian(f64),

    #[error("eigendecomposition failed: {0}")]
    Eigendecomposition(String),

    #[error("state cannot be normalized: {0}")]
    InvalidState(String),

    #[error("shell projection did not converge after {iterations} iterations (|H - E| = {residual:e})")]
    ProjectionFailed { iterations: usize, residual: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("forbidden region at node {node}: V = {potential} >= E = {energy}")]
    ForbiddenRegion { node: usize, potential: f64, energy: f64 },

    #[error("all coordinates excluded from the multiplier solve at node {node}")]
    DegenerateGeometry { node: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
