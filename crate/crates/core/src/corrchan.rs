//! Deterministic channel environment: geometry, Friis path loss, Kronecker
//! correlation, beamforming and the per-stream effective-correlation scalars.

use nalgebra::linalg::SymmetricEigen;

use crate::{CMatrix, Error, Result, C64};

const COLUMN_NORM_TOL: f64 = 1e-12;
const PSD_CLIP_TOL: f64 = 1e-12;
const SINGULAR_RCOND: f64 = 1e-12;

/// Scenario root: antennas, streams, propagation and correlation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// BS antennas `N_t`.
    pub n_t: usize,
    /// Devices per cluster `N_r` (virtual receive antennas).
    pub n_r: usize,
    /// Data streams per cluster `M`.
    pub n_streams: usize,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Reference received power at 1 m (linear).
    pub k_friis: f64,
    /// Transmit SNR in dB.
    pub snr_db: f64,
    pub rho_t: f64,
    pub rho_r: f64,
    /// `N_t × M` beamforming matrix with unit-norm columns.
    pub beamforming: CMatrix,
}

impl SystemConfig {
    /// Builds a config with the identity-selection beamformer and validates it.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_t: usize,
        n_r: usize,
        n_streams: usize,
        alpha: f64,
        k_friis: f64,
        snr_db: f64,
        rho_t: f64,
        rho_r: f64,
    ) -> Result<Self> {
        let cfg = Self {
            n_t,
            n_r,
            n_streams,
            alpha,
            k_friis,
            snr_db,
            rho_t,
            rho_r,
            beamforming: identity_selection(n_t, n_streams),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces the beamformer and revalidates.
    pub fn with_beamforming(mut self, v: CMatrix) -> Result<Self> {
        self.beamforming = v;
        self.validate()?;
        Ok(self)
    }

    /// Returns a copy at a different SNR.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { snr_db, ..self.clone() }
    }

    /// Linear transmit SNR `γ̄ = 10^(snr_db/10)`.
    pub fn gamma_bar(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Diversity order `N_r − M + 1`.
    pub fn diversity(&self) -> usize {
        self.n_r + 1 - self.n_streams
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0 || self.n_r == 0 || self.n_streams == 0 {
            return Err(Error::Invalid("antenna and stream counts must be >= 1".into()));
        }
        if self.n_streams > self.n_t.min(self.n_r) {
            return Err(Error::Invalid(format!(
                "stream count M={} exceeds min(N_t={}, N_r={})",
                self.n_streams, self.n_t, self.n_r
            )));
        }
        if !(self.alpha >= 2.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("path-loss exponent {} must be >= 2", self.alpha)));
        }
        if !(self.k_friis > 0.0 && self.k_friis.is_finite()) {
            return Err(Error::Invalid(format!("reference gain {} must be > 0", self.k_friis)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Invalid("snr_db must be finite".into()));
        }
        for (name, rho) in [("rho_t", self.rho_t), ("rho_r", self.rho_r)] {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Invalid(format!("{name}={rho} outside [0, 1)")));
            }
        }
        let v = &self.beamforming;
        if v.nrows() != self.n_t || v.ncols() != self.n_streams {
            return Err(Error::Dimension(format!(
                "beamforming is {}x{}, expected {}x{}",
                v.nrows(),
                v.ncols(),
                self.n_t,
                self.n_streams
            )));
        }
        for (j, col) in v.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > COLUMN_NORM_TOL {
                return Err(Error::Invalid(format!("beamforming column {j} has norm {norm}")));
            }
        }
        Ok(())
    }
}

/// `N_t × M` matrix with ones on the principal diagonal.
pub fn identity_selection(n_t: usize, m: usize) -> CMatrix {
    CMatrix::from_fn(n_t, m, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

/// Exponential correlation matrix with entries `ρ^|i−j|`.
pub fn exponential_correlation(rho: f64, n: usize) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("correlation coefficient {rho} outside [0, 1)")));
    }
    if n == 0 {
        return Err(Error::Domain("correlation dimension must be >= 1".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| C64::new(rho.powi(i.abs_diff(j) as i32), 0.0)))
}

/// Friis path loss `𝒦·d^(−α)`.
pub fn friis_path_loss(d: f64, alpha: f64, k_friis: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("distance {d} must be > 0")));
    }
    Ok(k_friis * d.powf(-alpha))
}

/// Real eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(a.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

/// Hermitian PSD square root via eigendecomposition. Eigenvalues down to
/// `−1e-12·max(1, λ_max)` are clipped to zero; anything more negative is a
/// domain error.
pub fn hermitian_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let SymmetricEigen { eigenvectors, eigenvalues } = SymmetricEigen::new(a.clone());
    let scale = eigenvalues.iter().fold(1.0f64, |s, &l| s.max(l.abs()));
    let mut roots = Vec::with_capacity(eigenvalues.len());
    for &l in eigenvalues.iter() {
        if l < -PSD_CLIP_TOL * scale {
            return Err(Error::Domain(format!("matrix is not PSD (eigenvalue {l:e})")));
        }
        roots.push(C64::new(l.max(0.0).sqrt(), 0.0));
    }
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots));
    Ok(&eigenvectors * d * eigenvectors.adjoint())
}

/// Returns `R_t′ = Vᴴ R_t V` and the diagonal of its inverse.
pub fn effective_transmit_stats(v: &CMatrix, r_t: &CMatrix) -> Result<(CMatrix, Vec<f64>)> {
    if r_t.nrows() != r_t.ncols() || r_t.nrows() != v.nrows() {
        return Err(Error::Dimension(format!(
            "R_t is {}x{}, V is {}x{}",
            r_t.nrows(),
            r_t.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let eff = v.adjoint() * r_t * v;
    let eig = hermitian_eigenvalues(&eff);
    let (hi, lo) = (eig[0], eig[eig.len() - 1]);
    if !(hi > 0.0) || lo <= SINGULAR_RCOND * hi {
        return Err(Error::DegenerateBeamforming);
    }
    let inv = eff.clone().try_inverse().ok_or(Error::DegenerateBeamforming)?;
    let inv_diag = (0..inv.nrows()).map(|m| inv[(m, m)].re).collect();
    Ok((eff, inv_diag))
}

/// Clusters sorted by distance from the BS at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    positions: Vec<[f64; 2]>,
    distances: Vec<f64>,
    path_loss: Vec<f64>,
    order: Vec<usize>,
}

impl ClusterSet {
    /// Clusters given by distance only; positions are placed on the x axis.
    pub fn from_distances(distances: &[f64], alpha: f64, k_friis: f64) -> Result<Self> {
        let pos: Vec<[f64; 2]> = distances.iter().map(|&d| [d, 0.0]).collect();
        sort_clusters(&pos, alpha, k_friis)
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }

    /// Positions in sorted order.
    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// `d_1 ≤ … ≤ d_K`.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// `ℓ(d_k)` per sorted cluster.
    pub fn path_loss(&self) -> &[f64] {
        &self.path_loss
    }

    /// `order()[k]` is the input index of the k-th nearest cluster.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Computes distances from the origin and stably sorts clusters by them.
pub fn sort_clusters(positions: &[[f64; 2]], alpha: f64, k_friis: f64) -> Result<ClusterSet> {
    if positions.is_empty() {
        return Err(Error::Invalid("at least one cluster is required".into()));
    }
    let dist: Vec<f64> = positions.iter().map(|p| p[0].hypot(p[1])).collect();
    if let Some(i) = dist.iter().position(|&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::Domain(format!("cluster {i} is at distance {} from the BS", dist[i])));
    }
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    let distances: Vec<f64> = order.iter().map(|&i| dist[i]).collect();
    let path_loss = distances.iter().map(|&d| friis_path_loss(d, alpha, k_friis)).collect::<Result<Vec<_>>>()?;
    Ok(ClusterSet { positions: order.iter().map(|&i| positions[i]).collect(), distances, path_loss, order })
}

/// Transmit/receive correlation and derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPair {
    pub r_t: CMatrix,
    pub r_r: CMatrix,
    /// Eigenvalues of `R_r`, descending.
    pub r_r_eigs: Vec<f64>,
    /// `R_t′ = Vᴴ R_t V`.
    pub r_t_eff: CMatrix,
    /// `[R_t′⁻¹]_mm` per stream.
    pub inv_diag: Vec<f64>,
    pub r_r_sqrt: CMatrix,
    pub r_t_eff_sqrt: CMatrix,
}

impl CorrelationPair {
    /// Exponential correlation on both sides, as set in `cfg`.
    pub fn from_config(cfg: &SystemConfig) -> Result<Self> {
        let r_t = exponential_correlation(cfg.rho_t, cfg.n_t)?;
        let r_r = exponential_correlation(cfg.rho_r, cfg.n_r)?;
        Self::from_matrices(r_t, r_r, &cfg.beamforming)
    }

    pub fn from_matrices(r_t: CMatrix, r_r: CMatrix, v: &CMatrix) -> Result<Self> {
        if r_r.nrows() != r_r.ncols() {
            return Err(Error::Dimension("R_r must be square".into()));
        }
        let (r_t_eff, inv_diag) = effective_transmit_stats(v, &r_t)?;
        let r_r_eigs = hermitian_eigenvalues(&r_r);
        if r_r_eigs.iter().any(|&l| l <= 0.0) {
            return Err(Error::Domain("R_r must be positive definite".into()));
        }
        let r_r_sqrt = hermitian_sqrt(&r_r)?;
        let r_t_eff_sqrt = hermitian_sqrt(&r_t_eff)?;
        Ok(Self { r_t, r_r, r_r_eigs, r_t_eff, inv_diag, r_r_sqrt, r_t_eff_sqrt })
    }

    /// `det R_r` as the product of its eigenvalues.
    pub fn det_r_r(&self) -> f64 {
        self.r_r_eigs.iter().product()
    }
}

/// A validated config together with its clusters and correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub cfg: SystemConfig,
    pub clusters: ClusterSet,
    pub corr: CorrelationPair,
}

impl Deployment {
    pub fn new(cfg: SystemConfig, clusters: ClusterSet) -> Result<Self> {
        cfg.validate()?;
        let corr = CorrelationPair::from_config(&cfg)?;
        Ok(Self { cfg, clusters, corr })
    }

    pub fn n_streams(&self) -> usize {
        self.cfg.n_streams
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Same geometry and correlation at another SNR.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { cfg: self.cfg.with_snr_db(snr_db), ..self.clone() }
    }
}
