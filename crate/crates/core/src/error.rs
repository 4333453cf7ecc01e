use thiserror::Error;

/// Errors raised by the analytic and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A configuration violates a structural invariant.
    #[error("invalid configuration: {0}")]
    Invalid(String),
    /// Matrix or table dimensions disagree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// `Vᴴ R_t V` is singular, so zero-forcing is undefined.
    #[error("degenerate beamforming: effective transmit correlation is singular")]
    DegenerateBeamforming,
    /// The F̃ series lost too many digits or hit the term cap.
    #[error("series cancellation after {terms} terms (partial sum {partial:e})")]
    SeriesCancellation { partial: f64, terms: usize },
    /// Eigenvalues too close for the determinant-ratio formulas.
    #[error("eigenvalue degeneracy: {0}")]
    Degenerate(String),
    /// The default power recursion leaves no power for the nearest cluster.
    #[error("default power allocation infeasible: nearest-cluster coefficient {0:e} <= 0")]
    InfeasibleDefault(f64),
    /// Bisection could not bracket a root.
    #[error("no root: {0}")]
    NoRoot(String),
    /// A rate/power plan violates SIC decodability.
    #[error("infeasible plan: {0}")]
    Infeasible(String),
    /// Every Monte Carlo trial was discarded as numerically singular.
    #[error("all {0} Monte Carlo trials were discarded")]
    AllDiscarded(u64),
}

pub type Result<T> = std::result::Result<T, Error>;
