//! Link-level analytics for a downlink virtual MIMO-NOMA system with
//! zero-forcing receivers over Kronecker-correlated Rayleigh fading.
//!
//! The crate is organised bottom-up:
//!
//! * [`corrchan`] builds the deterministic environment (geometry, path loss,
//!   correlation, beamforming).
//! * [`specfun`] holds the scalar special functions and the determinant series
//!   for the outage CDF `F̃`.
//! * [`outage`] maps a scenario to outage probabilities, goodput and DMT.
//! * [`mcsim`] is an independent Monte Carlo oracle.
//! * [`optim`] contains the power, rate and joint goodput maximizers.
//!
//! Stream and cluster indices are 0-based throughout the API.

pub mod corrchan;
pub mod error;
pub mod mcsim;
pub mod optim;
pub mod outage;
pub mod preset;
pub mod specfun;

pub use corrchan::{ClusterSet, CorrelationPair, Deployment, SystemConfig};
pub use error::{Error, Result};
pub use mcsim::{McEstimate, TrialPlan};
pub use optim::{OptimizationResult, TriangularSystem};
pub use outage::{OutageReport, PhiTable, PowerAllocation, RatePlan, ThetaTable};
pub use specfun::{EigenSpectrum, FTildeParams};

/// Complex scalar used for all channel matrices.
pub type C64 = num_complex::Complex64;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
