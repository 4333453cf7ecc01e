//! Outage probabilities (F̃-based and asymptotic), goodput, diversity and DMT.

use nalgebra::DMatrix;

use crate::corrchan::{Deployment, SystemConfig};
use crate::specfun::{self, EigenSpectrum, FTildeParams, FTildeRoute};
use crate::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-10;

/// `2^R − 1` without cancellation for small `R`.
pub fn snr_threshold(rate: f64) -> f64 {
    (rate * std::f64::consts::LN_2).exp_m1()
}

/// NOMA power coefficients `ζ_{m,k}` (M × K).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    zeta: DMatrix<f64>,
}

impl PowerAllocation {
    /// Validates positivity and the per-stream budget `Σ_k ζ_{m,k} = 1/M`.
    pub fn new(zeta: DMatrix<f64>) -> Result<Self> {
        let m = zeta.nrows();
        if m == 0 || zeta.ncols() == 0 {
            return Err(Error::Dimension("power allocation must be non-empty".into()));
        }
        if let Some(v) = zeta.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("power coefficient {v} must be > 0")));
        }
        for (i, row) in zeta.row_iter().enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0 / m as f64).abs() > ROW_SUM_TOL {
                return Err(Error::Invalid(format!("stream {i} power sums to {s}, expected 1/{m}")));
            }
        }
        Ok(Self { zeta })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.zeta
    }

    pub fn n_streams(&self) -> usize {
        self.zeta.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.zeta.ncols()
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.zeta[(m, k)]
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.zeta.row(m).iter().copied().collect()
    }
}

/// Target rates `R_{m,k}` in bits/s/Hz (M × K).
#[derive(Debug, Clone, PartialEq)]
pub struct RatePlan {
    rates: DMatrix<f64>,
}

impl RatePlan {
    pub fn new(rates: DMatrix<f64>) -> Result<Self> {
        if rates.nrows() == 0 || rates.ncols() == 0 {
            return Err(Error::Dimension("rate plan must be non-empty".into()));
        }
        if let Some(v) = rates.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("rate {v} must be finite and >= 0")));
        }
        Ok(Self { rates })
    }

    /// Same rate for every stream and cluster.
    pub fn broadcast(rate: f64, m: usize, k: usize) -> Result<Self> {
        Self::new(DMatrix::from_element(m, k, rate))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn n_streams(&self) -> usize {
        self.rates.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.rates.ncols()
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.rates[(m, k)]
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.rates.row(m).iter().copied().collect()
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if m == 0 || k == 0 {
        return Err(Error::Dimension("matrix must be non-empty".into()));
    }
    if rows.iter().any(|r| r.len() != k) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(m, k, |i, j| rows[i][j]))
}

/// SIC margins `θ_{m,k}` with the index `i` attaining each minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTable {
    pub theta: DMatrix<f64>,
    pub argmin: DMatrix<usize>,
}

impl ThetaTable {
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.theta[(m, k)]
    }

    /// True iff every `θ_{m,1} > 0`.
    pub fn is_feasible(&self) -> bool {
        (0..self.theta.nrows()).all(|m| self.theta[(m, 0)] > 0.0)
    }
}

/// `θ_{m,k} = min_{i≥k} ζ_{m,i}/(2^{R_{m,i}}−1) − Σ_{l<i} ζ_{m,l}`, ties broken
/// toward the smallest `i`. Infeasible margins are reported, not rejected.
pub fn theta_table(zeta: &PowerAllocation, rates: &RatePlan) -> Result<ThetaTable> {
    theta_from_matrices(zeta.matrix(), rates.matrix())
}

pub(crate) fn theta_from_matrices(zeta: &DMatrix<f64>, rates: &DMatrix<f64>) -> Result<ThetaTable> {
    if zeta.shape() != rates.shape() {
        return Err(Error::Dimension(format!("power is {:?} but rates are {:?}", zeta.shape(), rates.shape())));
    }
    let (mm, kk) = zeta.shape();
    let mut theta = DMatrix::zeros(mm, kk);
    let mut argmin = DMatrix::zeros(mm, kk);
    for m in 0..mm {
        let mut prefix = 0.0;
        let diag: Vec<f64> = (0..kk)
            .map(|i| {
                let v = zeta[(m, i)] / snr_threshold(rates[(m, i)]) - prefix;
                prefix += zeta[(m, i)];
                v
            })
            .collect();
        let (mut best, mut at) = (f64::INFINITY, kk - 1);
        for k in (0..kk).rev() {
            if diag[k] <= best {
                best = diag[k];
                at = k;
            }
            theta[(m, k)] = best;
            argmin[(m, k)] = at;
        }
    }
    Ok(ThetaTable { theta, argmin })
}

/// Constants `φ_{m,k}` of the unified asymptote `p ≈ φ θ^(−d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTable {
    pub phi: DMatrix<f64>,
    /// `d = N_r − M + 1`.
    pub diversity: usize,
    pub n_streams: usize,
}

impl PhiTable {
    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.phi[(m, k)]
    }
}

/// Spectral part of `φ`, i.e. `φ_{m,k}·(γ̄ℓ(d_k)/[R_t′⁻¹]_mm)^d`.
pub fn phi_spectral_factor(n_r: usize, m: usize, spectrum: &EigenSpectrum) -> Result<f64> {
    let d = n_r - m + 1;
    let ln_fact = specfun::ln_factorial;
    let value = if spectrum.spread() < specfun::CLUSTER_TOL {
        (-(d as f64) * spectrum.mean().ln() - ln_fact(d)).exp()
    } else if m == 1 {
        let det: f64 = spectrum.lambdas().iter().product();
        1.0 / (ln_fact(n_r).exp() * det)
    } else {
        let spec =
            if spectrum.min_rel_gap() < specfun::CLUSTER_TOL { spectrum.split_clusters() } else { spectrum.clone() };
        let sign = if (n_r - m) % 2 == 0 { 1.0 } else { -1.0 };
        let ln_c = ln_fact(n_r - 1) - ln_fact(n_r - m) - ln_fact(d) - ln_fact(m - 2);
        sign * ln_c.exp() * specfun::log_det_ratio(d, spec.lambdas())
    };
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::Degenerate(format!("asymptotic constant {value:e} is not positive")));
    }
    Ok(value)
}

pub fn phi_table(dep: &Deployment) -> Result<PhiTable> {
    let cfg = &dep.cfg;
    let spectrum = EigenSpectrum::new(dep.corr.r_r_eigs.clone())?;
    let base = phi_spectral_factor(cfg.n_r, cfg.n_streams, &spectrum)?;
    let d = cfg.diversity();
    let g = cfg.gamma_bar();
    let pl = dep.clusters.path_loss();
    let phi =
        DMatrix::from_fn(cfg.n_streams, pl.len(), |m, k| base * (dep.corr.inv_diag[m] / (g * pl[k])).powi(d as i32));
    Ok(PhiTable { phi, diversity: d, n_streams: cfg.n_streams })
}

/// Argument of `F̃` for stream `m`, cluster `k`: `[R_t′⁻¹]_mm / (γ̄ θ ℓ(d_k))`.
pub fn outage_argument(m: usize, k: usize, dep: &Deployment, theta: &ThetaTable) -> f64 {
    dep.corr.inv_diag[m] / (dep.cfg.gamma_bar() * theta.get(m, k) * dep.clusters.path_loss()[k])
}

/// F̃-based outage probability with provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOutage {
    pub p: f64,
    /// `θ ≤ 0`: SIC cannot succeed, `p = 1`.
    pub infeasible: bool,
    /// Formula used, `None` when infeasible.
    pub route: Option<FTildeRoute>,
}

pub fn exact_outage(m: usize, k: usize, dep: &Deployment, theta: &ThetaTable) -> Result<ExactOutage> {
    if theta.get(m, k) <= 0.0 {
        return Ok(ExactOutage { p: 1.0, infeasible: true, route: None });
    }
    let params = FTildeParams::new(dep.cfg.n_streams, EigenSpectrum::new(dep.corr.r_r_eigs.clone())?)?;
    let (p, route) = specfun::f_tilde(outage_argument(m, k, dep, theta), &params)?;
    Ok(ExactOutage { p, infeasible: false, route: Some(route) })
}

/// Unified asymptote with clamping to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticOutage {
    pub p: f64,
    pub clamped: bool,
    pub infeasible: bool,
}

/// `φ θ^(−d)` without clamping.
pub fn power_law(phi: f64, theta: f64, d: usize) -> f64 {
    phi * theta.powi(-(d as i32))
}

pub fn asymptotic_outage(m: usize, k: usize, phi: &PhiTable, theta: &ThetaTable) -> AsymptoticOutage {
    let t = theta.get(m, k);
    if t <= 0.0 {
        return AsymptoticOutage { p: 1.0, clamped: false, infeasible: true };
    }
    let raw = power_law(phi.get(m, k), t, phi.diversity);
    AsymptoticOutage { p: raw.clamp(0.0, 1.0), clamped: raw > 1.0, infeasible: false }
}

/// `Σ_m Σ_k (1 − p_{m,k}) R_{m,k}`.
pub fn goodput(outages: &DMatrix<f64>, rates: &RatePlan) -> Result<f64> {
    if outages.shape() != rates.matrix().shape() {
        return Err(Error::Dimension("outage table and rate plan differ in shape".into()));
    }
    if let Some(p) = outages.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(outages.iter().zip(rates.matrix().iter()).map(|(p, r)| (1.0 - p) * r).sum())
}

pub fn diversity_order(cfg: &SystemConfig) -> usize {
    cfg.diversity()
}

/// Diversity gains `d* = (N_r−M+1)(1 − υ_k − r_k)` for one stream, after
/// checking `υ_K = 0` and `r_i ≤ υ_{i−1} − υ_i` for `i ≥ 2`.
pub fn dmt_gain(r: &[f64], upsilon: &[f64], cfg: &SystemConfig) -> Result<Vec<f64>> {
    if r.len() != upsilon.len() || r.is_empty() {
        return Err(Error::Dimension(format!("{} multiplexing gains vs {} power exponents", r.len(), upsilon.len())));
    }
    let kk = r.len();
    if upsilon[kk - 1].abs() > 1e-12 {
        return Err(Error::Invalid(format!("farthest power exponent {} must be 0", upsilon[kk - 1])));
    }
    if let Some(v) = r.iter().chain(upsilon).find(|v| !(**v >= 0.0 && **v <= 1.0)) {
        return Err(Error::Invalid(format!("gain/exponent {v} outside [0, 1]")));
    }
    if r[0] + upsilon[0] > 1.0 + 1e-12 {
        return Err(Error::Invalid("r_1 + υ_1 must not exceed 1".into()));
    }
    for i in 1..kk {
        if r[i] > upsilon[i - 1] - upsilon[i] + 1e-12 {
            return Err(Error::Invalid(format!(
                "r_{} = {} exceeds υ_{} − υ_{} = {}",
                i + 1,
                r[i],
                i,
                i + 1,
                upsilon[i - 1] - upsilon[i]
            )));
        }
    }
    let d = cfg.diversity() as f64;
    Ok(r.iter().zip(upsilon).map(|(r, u)| d * (1.0 - u - r)).collect())
}

/// `M^d φ (2^R − 1)^d`.
pub fn outage_lower_bound(m: usize, k: usize, phi: &PhiTable, rates: &RatePlan) -> f64 {
    let d = phi.diversity as i32;
    (phi.n_streams as f64).powi(d) * phi.get(m, k) * snr_threshold(rates.get(m, k)).powi(d)
}

/// Per-entry conditions reported alongside probabilities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flags {
    pub infeasible_theta: bool,
    pub asymptote_clamped: bool,
    pub series_cancellation: bool,
    pub mc_trial_discards: bool,
}

impl Flags {
    pub fn labels(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.infeasible_theta {
            out.push("infeasible-theta");
        }
        if self.asymptote_clamped {
            out.push("asymptote-clamped");
        }
        if self.series_cancellation {
            out.push("series-cancellation-fallback-to-mc");
        }
        if self.mc_trial_discards {
            out.push("mc-trial-discards");
        }
        out
    }
}

/// One `(m, k)` row of an [`OutageReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutageEntry {
    pub m: usize,
    pub k: usize,
    pub theta: f64,
    /// F̃ value; `None` when the series failed.
    pub p_exact_approx: Option<f64>,
    pub p_asym: f64,
    pub flags: Flags,
}

/// Outage table and goodput at one SNR. The exact column always means the
/// F̃ approximation.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageReport {
    pub snr_db: f64,
    pub n_streams: usize,
    pub n_clusters: usize,
    /// Row-major in `(m, k)`.
    pub entries: Vec<OutageEntry>,
    /// `None` when any F̃ evaluation failed.
    pub goodput_exact: Option<f64>,
    pub goodput_asym: f64,
}

impl OutageReport {
    pub fn entry(&self, m: usize, k: usize) -> &OutageEntry {
        &self.entries[m * self.n_clusters + k]
    }

    pub fn exact_matrix(&self) -> Option<DMatrix<f64>> {
        let v: Option<Vec<f64>> = self.entries.iter().map(|e| e.p_exact_approx).collect();
        v.map(|v| DMatrix::from_row_slice(self.n_streams, self.n_clusters, &v))
    }

    pub fn asym_matrix(&self) -> DMatrix<f64> {
        let v: Vec<f64> = self.entries.iter().map(|e| e.p_asym).collect();
        DMatrix::from_row_slice(self.n_streams, self.n_clusters, &v)
    }
}

/// Evaluates every `(m, k)` entry. Series failures are flagged per entry;
/// other errors abort.
pub fn outage_report(dep: &Deployment, zeta: &PowerAllocation, rates: &RatePlan) -> Result<OutageReport> {
    let (mm, kk) = (dep.n_streams(), dep.n_clusters());
    if zeta.matrix().shape() != (mm, kk) {
        return Err(Error::Dimension(format!(
            "power allocation is {:?}, scenario has M={mm}, K={kk}",
            zeta.matrix().shape()
        )));
    }
    let theta = theta_table(zeta, rates)?;
    let phi = phi_table(dep)?;
    let mut entries = Vec::with_capacity(mm * kk);
    for m in 0..mm {
        for k in 0..kk {
            let mut flags = Flags::default();
            let p_exact_approx = match exact_outage(m, k, dep, &theta) {
                Ok(e) => {
                    flags.infeasible_theta = e.infeasible;
                    Some(e.p)
                }
                Err(Error::SeriesCancellation { .. }) => {
                    flags.series_cancellation = true;
                    None
                }
                Err(e) => return Err(e),
            };
            let asym = asymptotic_outage(m, k, &phi, &theta);
            flags.asymptote_clamped = asym.clamped;
            entries.push(OutageEntry { m, k, theta: theta.get(m, k), p_exact_approx, p_asym: asym.p, flags });
        }
    }
    let mut report = OutageReport {
        snr_db: dep.cfg.snr_db,
        n_streams: mm,
        n_clusters: kk,
        entries,
        goodput_exact: None,
        goodput_asym: 0.0,
    };
    report.goodput_asym = goodput(&report.asym_matrix(), rates)?;
    report.goodput_exact = report.exact_matrix().map(|p| goodput(&p, rates)).transpose()?;
    Ok(report)
}
