//! Goodput maximization under the asymptotic outage model: closed-form power
//! allocation, bisection rate selection and their alternation.

use nalgebra::DMatrix;

use crate::corrchan::Deployment;
use crate::outage::{
    phi_table, power_law, snr_threshold, theta_from_matrices, theta_table, PhiTable, PowerAllocation, RatePlan,
    ThetaTable,
};
use crate::{Error, Result};

/// Relative tolerance between the closed-form margins and [`theta_table`].
pub const THETA_MATCH_TOL: f64 = 1e-10;
/// Bisection stops once the bracket is narrower than this fraction of `x`.
pub const BISECTION_REL_WIDTH: f64 = 1e-12;
/// Maximum number of upper-bracket doublings.
pub const MAX_DOUBLINGS: usize = 200;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_INITIAL_RATE: f64 = 1.0;

/// `U` (diagonal `1/(2^{R_k}−1)`, `−1` above) and `L = Uᵀ` for one stream.
/// With `θ = Lζ`, the margins are the diagonal terms of the SIC condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularSystem {
    /// `c_k = 2^{R_k} − 1`.
    c: Vec<f64>,
    /// `U⁻¹1` by back substitution.
    w: Vec<f64>,
}

impl TriangularSystem {
    pub fn new(rates: &[f64]) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Dimension("empty rate row".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Invalid(format!("rate {r} must be > 0")));
        }
        let c: Vec<f64> = rates.iter().map(|&r| snr_threshold(r)).collect();
        let mut w = vec![0.0; c.len()];
        let mut tail = 0.0;
        for k in (0..c.len()).rev() {
            w[k] = c[k] * (1.0 + tail);
            tail += w[k];
        }
        Ok(Self { c, w })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn u(&self) -> DMatrix<f64> {
        let k = self.c.len();
        DMatrix::from_fn(k, k, |i, j| match i.cmp(&j) {
            std::cmp::Ordering::Equal => 1.0 / self.c[i],
            std::cmp::Ordering::Less => -1.0,
            std::cmp::Ordering::Greater => 0.0,
        })
    }

    pub fn l(&self) -> DMatrix<f64> {
        self.u().transpose()
    }

    /// `e_kᵀ U⁻¹ 1`, all positive.
    pub fn u_inv_ones(&self) -> &[f64] {
        &self.w
    }

    /// `L⁻¹ b` by forward substitution: `y_k = c_k (b_k + Σ_{l<k} y_l)`.
    pub fn solve_l(&self, b: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        self.c
            .iter()
            .zip(b)
            .map(|(&c, &b)| {
                let y = c * (b + acc);
                acc += y;
                y
            })
            .collect()
    }

    /// Explicit `L⁻¹` in product form: `c_i c_j ∏_{j<t<i} 2^{R_t}` below the
    /// diagonal, `c_i` on it. Every entry is nonnegative.
    pub fn l_inverse(&self) -> DMatrix<f64> {
        let k = self.c.len();
        DMatrix::from_fn(k, k, |i, j| {
            if i < j {
                0.0
            } else if i == j {
                self.c[i]
            } else {
                self.c[i] * self.c[j] * ((j + 1)..i).map(|t| 1.0 + self.c[t]).product::<f64>()
            }
        })
    }
}

fn optimal_b(sys: &TriangularSystem, phi: &[f64], rates: &[f64], d: usize) -> Result<Vec<f64>> {
    let df = d as f64;
    let b: Vec<f64> = sys
        .u_inv_ones()
        .iter()
        .zip(phi)
        .zip(rates)
        .map(|((&w, &p), &r)| (df * p * r / w).powf(1.0 / (df + 1.0)))
        .collect();
    if let Some(v) = b.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Invalid(format!("KKT weight {v} must be positive")));
    }
    Ok(b)
}

fn check_shapes(rates: &RatePlan, phi: &PhiTable) -> Result<()> {
    if rates.matrix().shape() != phi.phi.shape() {
        return Err(Error::Dimension(format!(
            "rates are {:?} but phi is {:?}",
            rates.matrix().shape(),
            phi.phi.shape()
        )));
    }
    Ok(())
}

/// Closed-form optimal power for fixed rates. Returns `ζ*` and the margins,
/// which are checked against [`theta_table`] and must be attained on the
/// diagonal `i = k`.
pub fn optimal_power(rates: &RatePlan, phi: &PhiTable) -> Result<(PowerAllocation, ThetaTable)> {
    check_shapes(rates, phi)?;
    let (mm, kk) = rates.matrix().shape();
    let mf = mm as f64;
    let mut zeta = DMatrix::zeros(mm, kk);
    let mut closed = DMatrix::zeros(mm, kk);
    for m in 0..mm {
        let r = rates.row(m);
        let sys = TriangularSystem::new(&r)?;
        let phi_row: Vec<f64> = phi.phi.row(m).iter().copied().collect();
        let b = optimal_b(&sys, &phi_row, &r, phi.diversity)?;
        let y = sys.solve_l(&b);
        let total: f64 = y.iter().sum();
        for k in 0..kk {
            zeta[(m, k)] = y[k] / (mf * total);
            closed[(m, k)] = b[k] / (mf * total);
        }
    }
    let theta = theta_from_matrices(&zeta, rates.matrix())?;
    let scale = closed.amax();
    for m in 0..mm {
        for k in 0..kk {
            if (theta.theta[(m, k)] - closed[(m, k)]).abs() > THETA_MATCH_TOL * scale || theta.argmin[(m, k)] != k {
                return Err(Error::Infeasible(format!(
                    "closed-form margin for (m, k) = ({m}, {k}) is not attained on the diagonal"
                )));
            }
        }
    }
    Ok((PowerAllocation::new(zeta)?, theta))
}

/// `M^d φ (1ᵀL⁻¹b / b_k)^d`, the asymptotic outage at the optimal power.
pub fn asymptotic_outage_at_optimum(m: usize, k: usize, rates: &RatePlan, phi: &PhiTable) -> Result<f64> {
    check_shapes(rates, phi)?;
    let r = rates.row(m);
    let sys = TriangularSystem::new(&r)?;
    let phi_row: Vec<f64> = phi.phi.row(m).iter().copied().collect();
    let b = optimal_b(&sys, &phi_row, &r, phi.diversity)?;
    let total: f64 = sys.solve_l(&b).iter().sum();
    let d = phi.diversity as i32;
    Ok((phi.n_streams as f64).powi(d) * phi_row[k] * (total / b[k]).powi(d))
}

/// Per-entry stationarity condition of the rate problem, `g = ϱ − ℓ`.
#[derive(Debug, Clone, Copy)]
pub struct RateEquation {
    pub zeta: f64,
    /// `Σ_{l<k} ζ_l`.
    pub prefix: f64,
    pub phi: f64,
    pub d: usize,
}

impl RateEquation {
    /// `ϱ(x) = ζ x^{d+1}(1 − φx^{−d}) / (dφ ln(1 + ζ/(x + S_{k−1})))`.
    pub fn rho(&self, x: f64) -> f64 {
        let df = self.d as f64;
        let log = (self.zeta / (x + self.prefix)).ln_1p();
        self.zeta * x.powi(self.d as i32 + 1) * (1.0 - self.phi * x.powi(-(self.d as i32))) / (df * self.phi * log)
    }

    /// `ℓ(x) = (x + S_{k−1})(x + S_k)`.
    pub fn ell(&self, x: f64) -> f64 {
        (x + self.prefix) * (x + self.prefix + self.zeta)
    }

    pub fn g(&self, x: f64) -> f64 {
        self.rho(x) - self.ell(x)
    }

    /// Lower bracket `φ^{1/d}`, where `ϱ = 0`.
    pub fn lower(&self) -> f64 {
        self.phi.powf(1.0 / self.d as f64)
    }

    /// Root of `g` by bisection. The upper bracket starts at
    /// `bracket_factor · x_lo` and doubles until `g > 0`.
    pub fn solve(&self, bracket_factor: f64) -> Result<f64> {
        let mut lo = self.lower();
        if !(lo > 0.0 && lo.is_finite()) {
            return Err(Error::NoRoot(format!("lower bracket {lo} is not positive")));
        }
        let mut hi = lo * bracket_factor.max(1.0 + 1e-9);
        let mut found = false;
        for _ in 0..MAX_DOUBLINGS {
            if self.g(hi) > 0.0 {
                found = true;
                break;
            }
            lo = hi;
            hi *= 2.0;
        }
        if !found {
            return Err(Error::NoRoot(format!("no sign change below {hi:e}")));
        }
        while hi - lo > BISECTION_REL_WIDTH * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Optimal rates for fixed power, with the default upper bracket `2·x_lo`.
pub fn optimal_rate(zeta: &PowerAllocation, phi: &PhiTable) -> Result<(RatePlan, ThetaTable)> {
    optimal_rate_with_bracket(zeta, phi, 2.0)
}

pub fn optimal_rate_with_bracket(
    zeta: &PowerAllocation,
    phi: &PhiTable,
    bracket_factor: f64,
) -> Result<(RatePlan, ThetaTable)> {
    if zeta.matrix().shape() != phi.phi.shape() {
        return Err(Error::Dimension("power allocation and phi differ in shape".into()));
    }
    let (mm, kk) = zeta.matrix().shape();
    let mut rates = DMatrix::zeros(mm, kk);
    for m in 0..mm {
        let mut prefix = 0.0;
        for k in 0..kk {
            let eq = RateEquation { zeta: zeta.get(m, k), prefix, phi: phi.get(m, k), d: phi.diversity };
            let x = eq.solve(bracket_factor)?;
            rates[(m, k)] = (eq.zeta / (x + prefix)).ln_1p() / std::f64::consts::LN_2;
            prefix += eq.zeta;
        }
    }
    let plan = RatePlan::new(rates)?;
    let theta = theta_table(zeta, &plan)?;
    Ok((plan, theta))
}

/// Asymptotic goodput `Σ (1 − φθ^{−d}) R`. Entries with `θ ≤ 0` contribute
/// nothing; with `clamp` each outage is also capped at 1.
pub fn asymptotic_goodput(phi: &PhiTable, theta: &ThetaTable, rates: &RatePlan, clamp: bool) -> f64 {
    let (mm, kk) = rates.matrix().shape();
    let mut total = 0.0;
    for m in 0..mm {
        for k in 0..kk {
            let t = theta.get(m, k);
            if t <= 0.0 {
                continue;
            }
            let mut p = power_law(phi.get(m, k), t, phi.diversity);
            if clamp {
                p = p.min(1.0);
            }
            total += (1.0 - p) * rates.get(m, k);
        }
    }
    total
}

/// `Σ (1 − M^d φ (2^R − 1)^d) R`, an upper bound on the asymptotic goodput
/// for the given rates.
pub fn goodput_upper_bound(phi: &PhiTable, rates: &RatePlan) -> f64 {
    let (mm, kk) = rates.matrix().shape();
    (0..mm)
        .flat_map(|m| (0..kk).map(move |k| (m, k)))
        .map(|(m, k)| (1.0 - crate::outage::outage_lower_bound(m, k, phi, rates)) * rates.get(m, k))
        .sum()
}

/// The recursion `ζ_k = (1/M − Σ_{l>k} ζ_l)(1 − ε 2^{−R_k})` for `k = K…2`,
/// with the nearest cluster taking the remainder.
pub fn default_power_allocation(epsilon: f64, rates: &RatePlan) -> Result<PowerAllocation> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let (mm, kk) = rates.matrix().shape();
    let share = 1.0 / mm as f64;
    let mut zeta = DMatrix::zeros(mm, kk);
    for m in 0..mm {
        let mut tail = 0.0;
        for k in (1..kk).rev() {
            let z = (share - tail) * (1.0 - epsilon * (-rates.get(m, k)).exp2());
            zeta[(m, k)] = z;
            tail += z;
        }
        let first = share - tail;
        if !(first > 0.0) {
            return Err(Error::InfeasibleDefault(first));
        }
        zeta[(m, 0)] = first;
    }
    PowerAllocation::new(zeta)
}

/// Outcome of a goodput maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub zeta_star: PowerAllocation,
    pub rates_star: RatePlan,
    pub theta_star: ThetaTable,
    /// Asymptotic goodput at the returned plan.
    pub goodput_star: f64,
    /// Asymptotic goodput after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternates [`optimal_power`] and [`optimal_rate`] until the asymptotic
/// goodput improves by less than `tol`.
pub fn joint_optimize(
    rates_init: &RatePlan,
    tol: f64,
    max_iter: usize,
    dep: &Deployment,
) -> Result<OptimizationResult> {
    let phi = phi_table(dep)?;
    joint_optimize_with_phi(rates_init, tol, max_iter, &phi)
}

pub fn joint_optimize_with_phi(
    rates_init: &RatePlan,
    tol: f64,
    max_iter: usize,
    phi: &PhiTable,
) -> Result<OptimizationResult> {
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Invalid("tolerance must be > 0 and max_iter >= 1".into()));
    }
    check_shapes(rates_init, phi)?;
    if let Some(r) = rates_init.matrix().iter().find(|r| **r <= 0.0) {
        return Err(Error::Infeasible(format!("initial rate {r} must be > 0")));
    }
    let mut rates = rates_init.clone();
    let mut trace = Vec::new();
    let mut state = None;
    let mut converged = false;
    for _ in 0..max_iter {
        let (zeta, _) = optimal_power(&rates, phi)?;
        let (next, theta) = optimal_rate(&zeta, phi)?;
        let value = asymptotic_goodput(phi, &theta, &next, false);
        let prev = trace.last().copied();
        trace.push(value);
        rates = next.clone();
        state = Some((zeta, next, theta, value));
        if prev.is_some_and(|p| value - p < tol) {
            converged = true;
            break;
        }
    }
    let (zeta_star, rates_star, theta_star, goodput_star) = state.expect("at least one iteration");
    Ok(OptimizationResult {
        zeta_star,
        rates_star,
        theta_star,
        goodput_star,
        iterations: trace.len(),
        trace,
        converged,
    })
}
