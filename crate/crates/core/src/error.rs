use crate::stability::StabilityVerdict;

/// Failures of the dense linear-algebra kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("{context}: expected {expected:?}, got {found:?}")]
    DimensionMismatch {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix entries must be finite and match rows*cols")]
    InvalidEntries,
    #[error("eigenvalue iteration did not converge after {sweeps} sweeps")]
    EigenNoConvergence { sweeps: usize },
}

/// Which player a stage problem belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Follower,
    Leader,
}

impl core::fmt::Display for Player {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Player::Follower => f.write_str("follower"),
            Player::Leader => f.write_str("leader"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{0} stage matrix Gamma is not positive definite")]
    GammaNotInvertible(Player),
    #[error("no convergence after {iterations} iterations (last step {last_delta:e})")]
    NoConvergence { iterations: usize, last_delta: f64 },
    #[error("LMI projections did not reach tolerance after {iterations} iterations (gap {gap:e})")]
    Infeasible { iterations: usize, gap: f64 },
    #[error("LMI certificate met but power test did not certify stability: {0:?}")]
    CertifiedButUnstable(StabilityVerdict),
    #[error("observer design not certified stable: {0:?}")]
    NotCertified(StabilityVerdict),
    #[error("matrix is not certified Schur stable: {0:?}")]
    NotStable(StabilityVerdict),
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}
