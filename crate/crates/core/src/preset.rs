//! The reference deployment used for the published simulation figures.

use crate::corrchan::{sort_clusters, Deployment, SystemConfig};
use crate::outage::{PowerAllocation, RatePlan};
use crate::Result;

/// Cluster centres in metres, BS at the origin.
pub const CLUSTERS: [[f64; 2]; 4] = [[10.0, 0.0], [0.0, 20.0], [0.0, -30.0], [-40.0, 0.0]];
pub const N_T: usize = 3;
pub const N_R: usize = 3;
pub const N_STREAMS: usize = 3;
pub const EPSILON: f64 = 0.7;
pub const ALPHA: f64 = 3.0;
pub const K_FRIIS: f64 = 1.0;
pub const RHO: f64 = 0.5;
pub const SNR_DB: f64 = 70.0;
pub const RATE: f64 = 2.0;

/// `N_t = N_r = M = 3`, `α = 3`, `𝒦 = 1`, `ρ_t = ρ_r = 0.5`, 70 dB.
pub fn reference_config() -> SystemConfig {
    SystemConfig::new(N_T, N_R, N_STREAMS, ALPHA, K_FRIIS, SNR_DB, RHO, RHO).expect("reference config is valid")
}

/// Reference config on the four reference clusters.
pub fn reference_deployment() -> Deployment {
    let cfg = reference_config();
    let clusters = sort_clusters(&CLUSTERS, cfg.alpha, cfg.k_friis).expect("reference clusters are valid");
    Deployment::new(cfg, clusters).expect("reference deployment is valid")
}

/// Reference deployment with a different stream count, correlation and SNR.
pub fn reference_variant(n_streams: usize, rho: f64, snr_db: f64) -> Result<Deployment> {
    let cfg = SystemConfig::new(N_T, N_R, n_streams, ALPHA, K_FRIIS, snr_db, rho, rho)?;
    let clusters = sort_clusters(&CLUSTERS, cfg.alpha, cfg.k_friis)?;
    Deployment::new(cfg, clusters)
}

/// Single stream on the two nearest reference clusters, used for the
/// optimization studies.
pub fn two_cluster_deployment(snr_db: f64) -> Deployment {
    let cfg = SystemConfig::new(N_T, N_R, 1, ALPHA, K_FRIIS, snr_db, RHO, RHO).expect("valid config");
    let clusters = sort_clusters(&CLUSTERS[..2], cfg.alpha, cfg.k_friis).expect("valid clusters");
    Deployment::new(cfg, clusters).expect("valid deployment")
}

/// Uniform rate plan at the reference rate.
pub fn reference_rates(dep: &Deployment) -> RatePlan {
    RatePlan::broadcast(RATE, dep.n_streams(), dep.n_clusters()).expect("positive rate")
}

/// Default power recursion at the reference `ε`.
pub fn reference_power(rates: &RatePlan) -> Result<PowerAllocation> {
    crate::optim::default_power_allocation(EPSILON, rates)
}
