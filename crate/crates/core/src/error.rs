use thiserror::Error;

/// Errors raised by field construction, solvers and checks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: expected n={expected_n}, L={expected_length}, found n={found_n}, L={found_length}")]
    GridMismatch {
        expected_n: usize,
        expected_length: f64,
        found_n: usize,
        found_length: f64,
    },

    #[error("array shape {found:?} does not match grid shape {expected:?}")]
    ShapeMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },

    #[error("poisson right-hand side has nonzero mean {mean:e} (relative {relative:e})")]
    NonzeroMean { mean: f64, relative: f64 },

    #[error("velocity field is not solenoidal: max |div u| = {max_div:e} (scale {scale:e})")]
    NotSolenoidal { max_div: f64, scale: f64 },

    #[error("CFL violated: max|u| = {max_velocity:e}, dt = {dt:e} exceeds bound {bound:e}")]
    Cfl {
        max_velocity: f64,
        dt: f64,
        bound: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("snapshot format: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
