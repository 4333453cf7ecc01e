//! Monte Carlo oracle: Kronecker-correlated channel draws, the ZF statistic
//! `[(ZᴴZ)⁻¹]_mm` and binomial estimates of outage and goodput.
//!
//! Trials are grouped into fixed blocks of [`BLOCK_TRIALS`]. Block `b` draws
//! from `ChaCha8Rng::seed_from_u64(seed)` on stream `b`, so every trial's
//! randomness depends only on `(seed, trial index)`. Partitions are contiguous
//! runs of blocks evaluated in parallel and merged by summing integer tallies,
//! which makes estimates independent of the partition count and scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corrchan::{CorrelationPair, Deployment};
use crate::outage::{snr_threshold, PowerAllocation, RatePlan, ThetaTable};
use crate::{CMatrix, Error, Result, C64};

/// Trials per RNG stream.
pub const BLOCK_TRIALS: u64 = 1024;
/// Trials with `tr(G)·tr(G⁻¹)` above this are discarded as singular.
pub const MAX_CONDITION: f64 = 1e14;
const Z95: f64 = 1.959_963_984_540_054;

/// Trial count, seed and parallel layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub trials: u64,
    pub seed: u64,
    pub partitions: usize,
    /// Pair each channel with its reflected-uniform mirror.
    pub antithetic: bool,
    /// Evaluate the SINR union event as well and assert it matches the
    /// scalar threshold test.
    pub cross_check: bool,
}

impl TrialPlan {
    pub fn new(trials: u64, seed: u64) -> Result<Self> {
        let plan = Self {
            trials,
            seed,
            partitions: rayon::current_num_threads().max(1),
            antithetic: false,
            cross_check: false,
        };
        plan.with_partitions(plan.partitions.min(trials.max(1) as usize))
    }

    pub fn with_partitions(mut self, partitions: usize) -> Result<Self> {
        self.partitions = partitions;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Invalid("trial count must be >= 1".into()));
        }
        if self.partitions == 0 || self.partitions as u64 > self.trials {
            return Err(Error::Invalid(format!("partitions {} must lie in [1, {}]", self.partitions, self.trials)));
        }
        Ok(())
    }
}

/// Binomial estimate with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
    pub trials_used: u64,
    pub discarded: u64,
}

impl McEstimate {
    /// Normal interval, switching to Wilson when fewer than 10 successes or
    /// failures were seen.
    pub fn from_counts(hits: u64, n: u64, discarded: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::AllDiscarded(discarded));
        }
        let nf = n as f64;
        let p = hits as f64 / nf;
        let se = (p * (1.0 - p) / nf).sqrt();
        let ci95 = if p * nf < 10.0 || (1.0 - p) * nf < 10.0 {
            let z2 = Z95 * Z95;
            let denom = 1.0 + z2 / nf;
            let centre = (p + z2 / (2.0 * nf)) / denom;
            let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
            ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
        } else {
            ((p - Z95 * se).max(0.0), (p + Z95 * se).min(1.0))
        };
        Ok(Self { p_hat: p, std_err: se, ci95, trials_used: n, discarded })
    }
}

/// Precomputed square roots for drawing `Z = R_r^{1/2} Z_w R_t′^{1/2}`.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    n_r: usize,
    m: usize,
    a: Vec<C64>,
    b: Vec<C64>,
}

impl ChannelSampler {
    pub fn new(corr: &CorrelationPair) -> Self {
        let (n_r, m) = (corr.r_r_sqrt.nrows(), corr.r_t_eff_sqrt.nrows());
        let a = (0..n_r * n_r).map(|x| corr.r_r_sqrt[(x / n_r, x % n_r)]).collect();
        let b = (0..m * m).map(|x| corr.r_t_eff_sqrt[(x / m, x % m)]).collect();
        Self { n_r, m, a, b }
    }

    fn uniforms_needed(&self) -> usize {
        2 * self.n_r * self.m
    }

    /// Fills `z` (row-major `N_r × M`) from `2·N_r·M` open-interval uniforms.
    fn build(&self, u: &[f64], zw: &mut [C64], tmp: &mut [C64], z: &mut [C64]) {
        let (n, m) = (self.n_r, self.m);
        for (i, w) in zw.iter_mut().enumerate() {
            *w = polar_normal(u[2 * i], u[2 * i + 1]);
        }
        for i in 0..n {
            for j in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for l in 0..n {
                    s += self.a[i * n + l] * zw[l * m + j];
                }
                tmp[i * m + j] = s;
            }
        }
        for i in 0..n {
            for j in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for l in 0..m {
                    s += tmp[i * m + l] * self.b[l * m + j];
                }
                z[i * m + j] = s;
            }
        }
    }
}

/// `CN(0, 1)` from two uniforms in `(0, 1)`: `|w|² = −ln u₁`, phase `2πu₂`.
fn polar_normal(u1: f64, u2: f64) -> C64 {
    C64::from_polar((-u1.ln()).sqrt(), std::f64::consts::TAU * u2)
}

/// Uniform in `(0, 1)` on the midpoint lattice `(k + ½)/2⁵³`, closed under
/// `u ↦ 1 − u`.
fn open_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Draws one effective channel `Z` (`N_r × M`).
pub fn sample_effective_channel<R: Rng>(rng: &mut R, corr: &CorrelationPair) -> CMatrix {
    let s = ChannelSampler::new(corr);
    let u: Vec<f64> = (0..s.uniforms_needed()).map(|_| open_uniform(rng)).collect();
    let len = s.n_r * s.m;
    let (mut zw, mut tmp, mut z) = (vec![C64::default(); len], vec![C64::default(); len], vec![C64::default(); len]);
    s.build(&u, &mut zw, &mut tmp, &mut z);
    CMatrix::from_row_slice(s.n_r, s.m, &z)
}

/// Diagonal of `(ZᴴZ)⁻¹` through a Cholesky factor. Returns `None` when the
/// Gram matrix is numerically singular.
fn zf_diagonal(z: &[C64], n_r: usize, m: usize, g: &mut [C64], out: &mut [f64]) -> Option<()> {
    for i in 0..m {
        for j in 0..=i {
            let mut s = C64::new(0.0, 0.0);
            for r in 0..n_r {
                s += z[r * m + i].conj() * z[r * m + j];
            }
            g[i * m + j] = s;
        }
    }
    let trace: f64 = (0..m).map(|i| g[i * m + i].re).sum();
    // in-place lower Cholesky
    for j in 0..m {
        let mut d = g[j * m + j].re;
        for l in 0..j {
            d -= g[j * m + l].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        g[j * m + j] = C64::new(d, 0.0);
        for i in j + 1..m {
            let mut s = g[i * m + j];
            for l in 0..j {
                s -= g[i * m + l] * g[j * m + l].conj();
            }
            g[i * m + j] = s / d;
        }
    }
    // (ZᴴZ)⁻¹ = L⁻ᴴ L⁻¹, so its diagonal is the column norms of L⁻¹.
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut col = vec![C64::new(0.0, 0.0); m];
    for c in 0..m {
        for i in 0..m {
            let mut s = if i == c { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            for l in c..i {
                s -= g[i * m + l] * col[l];
            }
            col[i] = if i < c { C64::new(0.0, 0.0) } else { s / g[i * m + i].re };
        }
        out[c] = col[c..].iter().map(|v| v.norm_sqr()).sum();
    }
    let inv_trace: f64 = out.iter().sum();
    if !(trace * inv_trace <= MAX_CONDITION) {
        return None;
    }
    Some(())
}

/// `[(ZᴴZ)⁻¹]_mm`. Fails when `ZᴴZ` is numerically singular.
pub fn zf_statistic(z: &CMatrix, m: usize) -> Result<f64> {
    let (n_r, mm) = z.shape();
    if m >= mm {
        return Err(Error::Dimension(format!("stream {m} out of range for {mm} columns")));
    }
    let flat: Vec<C64> = (0..n_r * mm).map(|x| z[(x / mm, x % mm)]).collect();
    let mut g = vec![C64::default(); mm * mm];
    let mut out = vec![0.0; mm];
    zf_diagonal(&flat, n_r, mm, &mut g, &mut out).ok_or_else(|| Error::Domain("ZᴴZ is numerically singular".into()))?;
    Ok(out[m])
}

/// Scalar outage test `stat > γ̄ θ ℓ`; certain outage when `θ ≤ 0`.
pub fn outage_trial(stat: f64, gamma_bar: f64, theta: f64, path_loss: f64) -> bool {
    theta <= 0.0 || stat > gamma_bar * theta * path_loss
}

/// Outage as the union over `i ∈ [k, K]` of `log₂(1 + γ_{k→i}) < R_i`, with
/// `γ_{k→i} = γ̄ℓζ_i / (γ̄ℓ Σ_{l<i} ζ_l + stat)`.
pub fn outage_by_sinr(k: usize, stat: f64, gamma_bar: f64, zeta: &[f64], rates: &[f64], path_loss: f64) -> bool {
    let gl = gamma_bar * path_loss;
    let mut prefix: f64 = zeta[..k].iter().sum();
    for i in k..zeta.len() {
        let sinr = gl * zeta[i] / (gl * prefix + stat);
        if sinr < snr_threshold(rates[i]) {
            return true;
        }
        prefix += zeta[i];
    }
    false
}

/// Outage event for stream `m` at threshold `γ̄θℓ` (`None` means certain
/// outage).
#[derive(Debug, Clone, Copy)]
struct Event {
    m: usize,
    threshold: Option<f64>,
    k: usize,
}

#[derive(Debug, Clone, Default)]
struct Tally {
    hits: Vec<u64>,
    used: u64,
    discarded: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        self.used += other.used;
        self.discarded += other.discarded;
        self
    }
}

struct CrossCheck<'a> {
    gamma_bar: f64,
    zeta: &'a PowerAllocation,
    rates: &'a RatePlan,
    path_loss: &'a [f64],
}

fn run_block(
    sampler: &ChannelSampler,
    plan: &TrialPlan,
    block: u64,
    events: &[Event],
    check: Option<&CrossCheck<'_>>,
) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(block);
    let start = block * BLOCK_TRIALS;
    let count = BLOCK_TRIALS.min(plan.trials - start);
    let (n, m) = (sampler.n_r, sampler.m);
    let mut u = vec![0.0; sampler.uniforms_needed()];
    let (mut zw, mut tmp, mut z) =
        (vec![C64::default(); n * m], vec![C64::default(); n * m], vec![C64::default(); n * m]);
    let mut g = vec![C64::default(); m * m];
    let mut stats = vec![0.0; m];
    let mut tally = Tally { hits: vec![0; events.len()], ..Tally::default() };
    for t in 0..count {
        if plan.antithetic && t % 2 == 1 {
            u.iter_mut().for_each(|v| *v = 1.0 - *v);
        } else {
            u.iter_mut().for_each(|v| *v = open_uniform(&mut rng));
        }
        sampler.build(&u, &mut zw, &mut tmp, &mut z);
        if zf_diagonal(&z, n, m, &mut g, &mut stats).is_none() {
            tally.discarded += 1;
            continue;
        }
        tally.used += 1;
        for (h, e) in tally.hits.iter_mut().zip(events) {
            let s = stats[e.m];
            let out = match e.threshold {
                None => true,
                Some(th) => s > th,
            };
            if let Some(c) = check {
                let alt = outage_by_sinr(e.k, s, c.gamma_bar, &c.zeta.row(e.m), &c.rates.row(e.m), c.path_loss[e.k]);
                assert_eq!(out, alt, "threshold and SINR outage predicates disagree");
            }
            *h += out as u64;
        }
    }
    tally
}

fn run_events(
    corr: &CorrelationPair,
    plan: &TrialPlan,
    events: &[Event],
    check: Option<&CrossCheck<'_>>,
) -> Result<Tally> {
    plan.validate()?;
    let sampler = ChannelSampler::new(corr);
    let blocks = plan.trials.div_ceil(BLOCK_TRIALS);
    let parts = (plan.partitions as u64).min(blocks);
    let empty = Tally { hits: vec![0; events.len()], ..Tally::default() };
    let tally = (0..parts)
        .into_par_iter()
        .map(|p| {
            let (lo, hi) = (p * blocks / parts, (p + 1) * blocks / parts);
            (lo..hi).fold(empty.clone(), |acc, b| acc.merge(run_block(&sampler, plan, b, events, check)))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(empty.clone(), Tally::merge);
    if tally.used == 0 {
        return Err(Error::AllDiscarded(tally.discarded));
    }
    Ok(tally)
}

fn event_for(m: usize, k: usize, dep: &Deployment, theta: &ThetaTable) -> Event {
    let t = theta.get(m, k);
    let threshold = (t > 0.0).then(|| dep.cfg.gamma_bar() * t * dep.clusters.path_loss()[k]);
    Event { m, threshold, k }
}

/// Estimates `p_{m,k}` from `plan.trials` channel draws.
pub fn estimate_outage(
    m: usize,
    k: usize,
    plan: &TrialPlan,
    dep: &Deployment,
    theta: &ThetaTable,
) -> Result<McEstimate> {
    if m >= dep.n_streams() || k >= dep.n_clusters() {
        return Err(Error::Dimension(format!("(m, k) = ({m}, {k}) out of range")));
    }
    let t = run_events(&dep.corr, plan, &[event_for(m, k, dep, theta)], None)?;
    McEstimate::from_counts(t.hits[0], t.used, t.discarded)
}

/// Monte Carlo goodput with the per-entry estimates (row-major in `(m, k)`).
#[derive(Debug, Clone, PartialEq)]
pub struct McGoodput {
    pub goodput: f64,
    /// Standard error of the goodput estimate, treating entries as independent.
    pub std_err: f64,
    pub table: Vec<McEstimate>,
    pub discarded: u64,
}

/// Estimates every `p_{m,k}` from shared channel draws and plugs them into
/// the goodput sum.
pub fn estimate_goodput(
    plan: &TrialPlan,
    dep: &Deployment,
    zeta: &PowerAllocation,
    rates: &RatePlan,
) -> Result<McGoodput> {
    let theta = crate::outage::theta_table(zeta, rates)?;
    let (mm, kk) = (dep.n_streams(), dep.n_clusters());
    if theta.theta.shape() != (mm, kk) {
        return Err(Error::Dimension("plan does not match the deployment".into()));
    }
    let events: Vec<Event> =
        (0..mm).flat_map(|m| (0..kk).map(move |k| (m, k))).map(|(m, k)| event_for(m, k, dep, &theta)).collect();
    let check = CrossCheck { gamma_bar: dep.cfg.gamma_bar(), zeta, rates, path_loss: dep.clusters.path_loss() };
    let t = run_events(&dep.corr, plan, &events, plan.cross_check.then_some(&check))?;
    let table = t.hits.iter().map(|&h| McEstimate::from_counts(h, t.used, t.discarded)).collect::<Result<Vec<_>>>()?;
    let r = rates.matrix();
    let mut goodput = 0.0;
    let mut var = 0.0;
    for (i, e) in table.iter().enumerate() {
        let rate = r[(i / kk, i % kk)];
        goodput += (1.0 - e.p_hat) * rate;
        var += (rate * e.std_err).powi(2);
    }
    Ok(McGoodput { goodput, std_err: var.sqrt(), table, discarded: t.discarded })
}
