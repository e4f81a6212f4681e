use thiserror::Error;

use crate::krylov::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("size mismatch: expected {expected} samples, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("{levels} levels would leave a coarsest grid of {coarsest} points per side (need at least 3)")]
    DegenerateHierarchy { levels: usize, coarsest: usize },

    #[error("zero diagonal entry at index {0}")]
    ZeroDiagonal(usize),

    #[error("singular matrix: zero pivot in column {0}")]
    Singular(usize),

    #[error("Bi-CGSTAB breakdown: {quantity} vanished at iteration {}", report.iterations)]
    Breakdown {
        quantity: &'static str,
        report: SolveReport,
    },

    #[error("solver did not converge within {} iterations (relative residual {:.3e})", report.iterations, report.final_relative_residual())]
    NotConverged { report: SolveReport },

    #[error("cylindrical-harmonic series did not converge (last term {last_term:.3e})")]
    SeriesNotConverged { last_term: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Solver report attached to a Krylov failure, if any.
    pub fn solve_report(&self) -> Option<&SolveReport> {
        match self {
            Error::Breakdown { report, .. } | Error::NotConverged { report } => Some(report),
            _ => None,
        }
    }
}
