//! Homogenized effective permittivity of a 2D plasmonic-crystal unit cell
//! and adjoint-based shape optimization of its conductive interface.
//!
//! The unit cell is the square `[0,1]^2` with a circular conductive
//! interface fitted by a quadrilateral mesh. A complex-valued periodic
//! cell problem yields two corrector fields whose gradients weight the
//! averaging that produces the 2x2 effective permittivity tensor. The
//! interface shape is controlled by a nodal deformation field with zero
//! boundary trace; a damped inverse-BFGS iteration drives the effective
//! tensor towards a prescribed target using gradients obtained from an
//! adjoint solve and an `H^1` Riesz lift.

pub mod adjoint;
pub mod cellproblem;
pub mod config;
pub mod fem;
pub mod geometry;
pub mod kinematics;
pub mod linalg;
pub mod optimizer;
pub mod output;

use std::path::PathBuf;

/// Crate-wide error type. Variants map onto CLI exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("degenerate deformation: {0}")]
    DegenerateDeformation(String),

    #[error("linear solver failure: {0}")]
    Solver(String),

    #[error("line search failure: {0}")]
    LineSearch(String),

    #[error("quasi-Newton history corruption: {0}")]
    HistoryCorruption(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the CLI (0 = success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Validation(_) => 2,
            Error::DegenerateDeformation(_) => 3,
            Error::Solver(_) | Error::HistoryCorruption(_) => 4,
            Error::LineSearch(_) => 5,
            _ => 1,
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
