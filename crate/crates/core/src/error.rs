use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field contains non-finite values")]
    NonFiniteField,

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid scale factor {0} (must be finite and > 0)")]
    InvalidScale(f64),

    #[error("interaction energy B = {0} is not negative; no defocusing scale exists")]
    NotDefocusable(f64),

    #[error("parameters (lambda1 = {lambda1}, lambda2 = {lambda2}) are not in the unstable regime")]
    NotUnstableRegime { lambda1: f64, lambda2: f64 },

    #[error("no field with negative interaction energy was found from the initial guess")]
    NoDescentDirection,

    #[error("no field of mass {mass} on this grid reaches Q = 0 (largest -1.5 B/A found: {best_ratio:.4}); the grid is too coarse")]
    PohozaevUnreachable { mass: f64, best_ratio: f64 },

    #[error("stationary point reached but |Q|/A = {q_residual:e} exceeds 1e-6; the grid is too small or too coarse")]
    QResidualFloor { q_residual: f64 },

    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("iterate left the basin: kinetic energy {kinetic} >= 2k = {limit}")]
    BasinEscape { kinetic: f64, limit: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid physical input: {0}")]
    InvalidPhysical(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
