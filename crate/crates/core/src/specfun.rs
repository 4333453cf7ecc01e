//! Special functions and the determinant series for the outage CDF `F̃`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Relative spread/gap below which eigenvalues are treated as coincident.
pub const CLUSTER_TOL: f64 = 1e-6;
/// Symmetric relative split applied to partially clustered eigenvalues.
pub const CLUSTER_SPLIT: f64 = 1e-5;
/// Relative tail bound at which the series is truncated.
pub const SERIES_TOL: f64 = 1e-12;
/// Hard cap on the number of power-series terms.
pub const SERIES_MAX_TERMS: usize = 500;
/// Largest tolerated ratio of peak partial sum to the final value.
pub const CANCELLATION_RATIO: f64 = 1e6;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0` (Lanczos, with reflection below 1/2).
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_infinite() {
        return Err(Error::Domain(format!("ln_gamma argument {x} must be > 0")));
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    use std::f64::consts::PI;
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma_unchecked(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// `ln n!`, exact to rounding for the first 171 values.
pub fn ln_factorial(n: usize) -> f64 {
    if n <= 170 {
        (2..=n).map(|k| k as f64).product::<f64>().ln()
    } else {
        ln_gamma_unchecked(n as f64 + 1.0)
    }
}

/// Rising factorial `(a)_n = a(a+1)…(a+n−1)`.
pub fn pochhammer(a: f64, n: usize) -> f64 {
    (0..n).map(|i| a + i as f64).product()
}

/// Regularized lower incomplete gamma `P(s, x) = γ(s, x)/Γ(s)`.
pub fn reg_lower_gamma(s: f64, x: f64) -> Result<f64> {
    if !(s > 0.0) || s.is_infinite() {
        return Err(Error::Domain(format!("shape {s} must be > 0")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("argument {x} must be >= 0")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let ln_pre = -x + s * x.ln() - ln_gamma_unchecked(s);
    let p = if x < s + 1.0 {
        // series: e^{-x} x^s / Γ(s+1) · Σ x^n / ((s+1)…(s+n))
        let mut ap = s;
        let mut del = 1.0 / s;
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        sum * ln_pre.exp()
    } else {
        // modified Lentz continued fraction for Q(s, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - ln_pre.exp() * h
    };
    Ok(p.clamp(0.0, 1.0))
}

/// `∏_{i<j}(λ_i − λ_j)`, the determinant of `{λ_i^(N−j)}`.
pub fn vandermonde_det(lambdas: &[f64]) -> f64 {
    let mut v = 1.0;
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            v *= lambdas[i] - lambdas[j];
        }
    }
    v
}

/// Determinant of `[first | λ_i^(N−2) | … | λ_i^0]` by partial-pivoted LU.
pub fn replaced_column_det(first: &[f64], lambdas: &[f64]) -> f64 {
    let n = lambdas.len();
    assert_eq!(first.len(), n, "column length must match eigenvalue count");
    let scale = first.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let a = DMatrix::from_fn(n, n, |i, j| if j == 0 { first[i] / scale } else { lambdas[i].powi((n - 1 - j) as i32) });
    scale * a.lu().determinant()
}

/// Positive eigenvalues of `R_r` in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSpectrum {
    lambdas: Vec<f64>,
}

impl EigenSpectrum {
    pub fn new(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::Domain("empty eigenvalue list".into()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::Domain(format!("eigenvalue {l} must be positive")));
        }
        lambdas.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { lambdas })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// `(λ_max − λ_min)/λ_max`.
    pub fn spread(&self) -> f64 {
        let hi = self.lambdas[0];
        (hi - self.lambdas[self.lambdas.len() - 1]) / hi
    }

    pub fn mean(&self) -> f64 {
        self.lambdas.iter().sum::<f64>() / self.lambdas.len() as f64
    }

    /// Smallest gap between neighbours relative to `λ_max`.
    pub fn min_rel_gap(&self) -> f64 {
        let hi = self.lambdas[0];
        self.lambdas.windows(2).map(|w| (w[0] - w[1]) / hi).fold(f64::INFINITY, f64::min)
    }

    /// Splits runs of near-equal eigenvalues symmetrically about their mean
    /// by multiples of [`CLUSTER_SPLIT`]. Group means (hence the trace) are
    /// preserved, so the first-order effect on any symmetric function of the
    /// spectrum cancels and the induced error in `F̃` is `O(1e-10)`.
    pub fn split_clusters(&self) -> Self {
        let hi = self.lambdas[0];
        let mut out = Vec::with_capacity(self.lambdas.len());
        let mut start = 0;
        while start < self.lambdas.len() {
            let mut end = start + 1;
            while end < self.lambdas.len() && (self.lambdas[end - 1] - self.lambdas[end]) / hi < CLUSTER_TOL {
                end += 1;
            }
            let g = end - start;
            let mu = self.lambdas[start..end].iter().sum::<f64>() / g as f64;
            for q in 0..g {
                let off = (g as f64 - 1.0) / 2.0 - q as f64;
                out.push(if g == 1 { mu } else { mu * (1.0 + CLUSTER_SPLIT * off) });
            }
            start = end;
        }
        Self { lambdas: out }
    }
}

/// Dimensions entering `F̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct FTildeParams {
    pub n_r: usize,
    pub m: usize,
    pub spectrum: EigenSpectrum,
}

impl FTildeParams {
    pub fn new(m: usize, spectrum: EigenSpectrum) -> Result<Self> {
        let n_r = spectrum.len();
        if m == 0 || m > n_r {
            return Err(Error::Domain(format!("stream count {m} must be in [1, {n_r}]")));
        }
        Ok(Self { n_r, m, spectrum })
    }

    pub fn diversity(&self) -> usize {
        self.n_r - self.m + 1
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(x >= 0.0) || x.is_infinite() {
        return Err(Error::Domain(format!("F̃ argument {x} must be finite and >= 0")));
    }
    Ok(())
}

fn finish_probability(v: f64, terms: usize) -> Result<f64> {
    if !v.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&v) {
        return Err(Error::SeriesCancellation { partial: v, terms });
    }
    Ok(v.clamp(0.0, 1.0))
}

/// Neumaier compensated sum that also tracks the largest partial magnitude.
#[derive(Default)]
struct Accum {
    sum: f64,
    comp: f64,
    peak: f64,
}

impl Accum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
        self.peak = self.peak.max(self.value().abs()).max(v.abs());
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Full series of `F̃(x)`: the logarithmic block over
/// `ϑ ∈ [N_r−M+1, N_r−1]` followed by the power tail over `ϑ ≥ N_r`.
pub fn f_tilde_series(x: f64, p: &FTildeParams) -> Result<f64> {
    check_x(x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let lam = p.spectrum.lambdas();
    if p.n_r > 1 && p.spectrum.min_rel_gap() < CLUSTER_TOL {
        return Err(Error::Degenerate(format!("eigenvalues {lam:?} are clustered")));
    }
    let (n, m) = (p.n_r, p.m);
    let d = n - m + 1;
    let ln_c = ln_factorial(n - 1) - ln_factorial(d - 1);
    let v = vandermonde_det(lam);
    let ln_x = x.ln();
    let mut acc = Accum::default();
    let mut col = vec![0.0; n];

    for t in d..n {
        let ln_a = -(ln_factorial(t) + ln_factorial(t - d) + ln_factorial(n - 1 - t));
        let sign = if (n - m) % 2 == 0 { 1.0 } else { -1.0 };
        let w = (ln_c + ln_a + t as f64 * ln_x).exp();
        for (c, &l) in col.iter_mut().zip(lam) {
            *c = w * l.powi((n - t - 1) as i32) * l.ln();
        }
        acc.add(sign * replaced_column_det(&col, lam) / v);
    }

    let z = x / lam[n - 1];
    let mut terms = 0;
    for t in n.. {
        let ln_b = ln_factorial(t - n) - ln_factorial(t) - ln_factorial(t + m - 1 - n);
        let sign = if (t + m) % 2 == 0 { 1.0 } else { -1.0 };
        let base = ln_c + ln_b + (n - 1) as f64 * ln_x;
        let e = (t + 1 - n) as f64;
        for (c, &l) in col.iter_mut().zip(lam) {
            *c = (base + e * (x / l).ln()).exp();
        }
        let term = sign * replaced_column_det(&col, lam) / v;
        terms += 1;
        if !term.is_finite() {
            return Err(Error::SeriesCancellation { partial: acc.value(), terms });
        }
        acc.add(term);
        let r = z / (t + 2 - n) as f64;
        if r < 1.0 && term.abs() * r / (1.0 - r) < SERIES_TOL * acc.value().abs().max(1e-300) {
            break;
        }
        if terms >= SERIES_MAX_TERMS {
            return Err(Error::SeriesCancellation { partial: acc.value(), terms });
        }
    }
    let value = acc.value();
    if acc.peak > CANCELLATION_RATIO * value.abs().max(1e-300) {
        return Err(Error::SeriesCancellation { partial: value, terms });
    }
    finish_probability(value, terms)
}

/// Closed form for a single stream: the determinant ratio with first column
/// `λ_i^(N_r−1)(1 − e^(−x/λ_i))`.
pub fn f_tilde_m1(x: f64, lambdas: &[f64]) -> Result<f64> {
    check_x(x)?;
    let spec = EigenSpectrum::new(lambdas.to_vec())?;
    let lam = spec.lambdas();
    let n = lam.len();
    if n > 1 && spec.min_rel_gap() < CLUSTER_TOL {
        return Err(Error::Degenerate(format!("eigenvalues {lam:?} are clustered")));
    }
    let col: Vec<f64> = lam.iter().map(|&l| l.powi(n as i32 - 1) * -(-x / l).exp_m1()).collect();
    finish_probability(replaced_column_det(&col, lam) / vandermonde_det(lam), 0)
}

/// Equal-eigenvalue form `P(N_r − M + 1, x/λ₀)`.
pub fn f_tilde_equal(x: f64, lambda0: f64, n_r: usize, m: usize) -> Result<f64> {
    check_x(x)?;
    if !(lambda0 > 0.0) {
        return Err(Error::Domain(format!("eigenvalue {lambda0} must be > 0")));
    }
    if m == 0 || m > n_r {
        return Err(Error::Domain(format!("stream count {m} must be in [1, {n_r}]")));
    }
    reg_lower_gamma((n_r - m + 1) as f64, x / lambda0)
}

/// Which formula evaluated `F̃`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FTildeRoute {
    Equal,
    SingleStream,
    Series,
    /// Series after splitting partially clustered eigenvalues.
    SplitSeries,
}

/// Evaluates `F̃(x)`, choosing the equal-eigenvalue form, the single-stream
/// closed form or the series depending on the spectrum. For `M = 1` the series
/// is used while `x < λ_min`, where the closed form loses relative accuracy.
pub fn f_tilde(x: f64, p: &FTildeParams) -> Result<(f64, FTildeRoute)> {
    check_x(x)?;
    let spec = &p.spectrum;
    if spec.spread() < CLUSTER_TOL {
        return Ok((f_tilde_equal(x, spec.mean(), p.n_r, p.m)?, FTildeRoute::Equal));
    }
    let (params, route) = if spec.min_rel_gap() < CLUSTER_TOL {
        let split = FTildeParams { spectrum: spec.split_clusters(), ..p.clone() };
        (std::borrow::Cow::Owned(split), FTildeRoute::SplitSeries)
    } else {
        (std::borrow::Cow::Borrowed(p), FTildeRoute::Series)
    };
    let lam = params.spectrum.lambdas();
    if p.m == 1 && x >= lam[lam.len() - 1] {
        let v = f_tilde_m1(x, lam)?;
        let route = if route == FTildeRoute::Series { FTildeRoute::SingleStream } else { route };
        return Ok((v, route));
    }
    Ok((f_tilde_series(x, &params)?, route))
}

/// `det([λ_i^(N_r−ϑ−1) ln λ_i | λ_i^(N_r−j)]) / det({λ_i^(N_r−j)})`.
pub fn log_det_ratio(theta: usize, lambdas: &[f64]) -> f64 {
    let n = lambdas.len();
    let col: Vec<f64> = lambdas.iter().map(|&l| l.powi(n as i32 - theta as i32 - 1) * l.ln()).collect();
    replaced_column_det(&col, lambdas) / vandermonde_det(lambdas)
}
