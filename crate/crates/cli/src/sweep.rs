//! SNR sweeps of the outage table and goodput.

use std::io::Write;

use rayon::prelude::*;
use vnoma::corrchan::Deployment;
use vnoma::mcsim::{estimate_goodput, McEstimate, TrialPlan};
use vnoma::optim::{default_power_allocation, optimal_power};
use vnoma::outage::{outage_report, phi_table, theta_table, PowerAllocation, RatePlan};

use crate::error::{runtime, CliResult};
use crate::scenario::{PowerMode, Scenario};

pub const HEADER: &str =
    "snr_db,m,k,theta,p_exact_approx,p_asym,p_mc,mc_ci_low,mc_ci_high,goodput_exact,goodput_asym,goodput_mc,flags";
pub const GOODPUT_HEADER: &str = "snr_db,goodput_exact,goodput_asym,goodput_mc,goodput_mc_std_err,flags";

/// Set on every row of a point whose analytic evaluation failed outright.
pub const ANALYTIC_ERROR: &str = "analytic-error";
const SERIES_CANCELLATION: &str = "series-cancellation-fallback-to-mc";
const MC_DISCARDS: &str = "mc-trial-discards";

/// One CSV row; `m` and `k` are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub snr_db: f64,
    pub m: usize,
    pub k: usize,
    pub theta: Option<f64>,
    pub p_exact_approx: Option<f64>,
    pub p_asym: Option<f64>,
    pub p_mc: Option<f64>,
    pub mc_ci_low: Option<f64>,
    pub mc_ci_high: Option<f64>,
    pub goodput_exact: Option<f64>,
    pub goodput_asym: Option<f64>,
    pub goodput_mc: Option<f64>,
    pub flags: Vec<&'static str>,
}

impl SweepRow {
    pub fn has_error_flag(&self) -> bool {
        self.flags.iter().any(|f| *f == SERIES_CANCELLATION || *f == ANALYTIC_ERROR)
    }
}

/// All rows of one SNR point plus the Monte Carlo detail behind them.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub rows: Vec<SweepRow>,
    pub mc: Option<Vec<McEstimate>>,
    pub goodput_mc_std_err: Option<f64>,
    pub error: Option<String>,
}

/// Power coefficients the scenario prescribes at this deployment's SNR.
pub fn power_for(scenario: &Scenario, dep: &Deployment, rates: &RatePlan) -> vnoma::Result<PowerAllocation> {
    match &scenario.power {
        PowerMode::Default { epsilon } => default_power_allocation(*epsilon, rates),
        PowerMode::Explicit(z) => Ok(z.clone()),
        PowerMode::Optimized => optimal_power(rates, &phi_table(dep)?).map(|(z, _)| z),
    }
}

fn blank_rows(snr_db: f64, mm: usize, kk: usize) -> Vec<SweepRow> {
    (0..mm * kk)
        .map(|i| SweepRow {
            snr_db,
            m: i / kk + 1,
            k: i % kk + 1,
            theta: None,
            p_exact_approx: None,
            p_asym: None,
            p_mc: None,
            mc_ci_low: None,
            mc_ci_high: None,
            goodput_exact: None,
            goodput_asym: None,
            goodput_mc: None,
            flags: Vec::new(),
        })
        .collect()
}

fn run_point(scenario: &Scenario, base: &Deployment, snr_db: f64, plan: Option<&TrialPlan>) -> SweepPoint {
    let dep = base.with_snr_db(snr_db);
    let (mm, kk) = (dep.n_streams(), dep.n_clusters());
    let mut point =
        SweepPoint { snr_db, rows: blank_rows(snr_db, mm, kk), mc: None, goodput_mc_std_err: None, error: None };
    let rates = &scenario.rates;
    let analytic = power_for(scenario, &dep, rates).and_then(|z| {
        let theta = theta_table(&z, rates)?;
        Ok((outage_report(&dep, &z, rates)?, theta, z))
    });
    let (report, theta, zeta) = match analytic {
        Ok(v) => v,
        Err(e) => {
            point.rows.iter_mut().for_each(|r| r.flags.push(ANALYTIC_ERROR));
            point.error = Some(e.to_string());
            return point;
        }
    };
    for (row, e) in point.rows.iter_mut().zip(&report.entries) {
        row.theta = Some(theta.get(e.m, e.k));
        row.p_exact_approx = e.p_exact_approx;
        row.p_asym = Some(e.p_asym);
        row.goodput_exact = report.goodput_exact;
        row.goodput_asym = Some(report.goodput_asym);
        row.flags = e.flags.labels();
    }
    if let Some(plan) = plan {
        match estimate_goodput(plan, &dep, &zeta, rates) {
            Ok(g) => {
                for (row, est) in point.rows.iter_mut().zip(&g.table) {
                    row.p_mc = Some(est.p_hat);
                    row.mc_ci_low = Some(est.ci95.0);
                    row.mc_ci_high = Some(est.ci95.1);
                    row.goodput_mc = Some(g.goodput);
                    if g.discarded > 0 && !row.flags.contains(&MC_DISCARDS) {
                        row.flags.push(MC_DISCARDS);
                    }
                }
                point.goodput_mc_std_err = Some(g.std_err);
                point.mc = Some(g.table);
            }
            Err(e) => {
                point.rows.iter_mut().for_each(|r| {
                    if !r.flags.contains(&MC_DISCARDS) {
                        r.flags.push(MC_DISCARDS)
                    }
                });
                point.error = Some(e.to_string());
            }
        }
    }
    point
}

/// Evaluates every SNR point in parallel; points come back in grid order.
pub fn run_outage_sweep(scenario: &Scenario, plan: Option<&TrialPlan>) -> CliResult<Vec<SweepPoint>> {
    let dep = scenario.deployment()?;
    let snrs = scenario.snr_points();
    Ok(snrs.par_iter().map(|&s| run_point(scenario, &dep, s, plan)).collect())
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_rows<W: Write>(out: &mut W, points: &[SweepPoint]) -> CliResult<()> {
    writeln!(out, "{HEADER}").map_err(runtime)?;
    for r in points.iter().flat_map(|p| &p.rows) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.snr_db,
            r.m,
            r.k,
            num(r.theta),
            num(r.p_exact_approx),
            num(r.p_asym),
            num(r.p_mc),
            num(r.mc_ci_low),
            num(r.mc_ci_high),
            num(r.goodput_exact),
            num(r.goodput_asym),
            num(r.goodput_mc),
            r.flags.join(";")
        )
        .map_err(runtime)?;
    }
    Ok(())
}

/// One row per SNR point; flags are the union over the point's rows.
pub fn write_goodput<W: Write>(out: &mut W, points: &[SweepPoint]) -> CliResult<()> {
    writeln!(out, "{GOODPUT_HEADER}").map_err(runtime)?;
    for p in points {
        let mut flags: Vec<&str> = Vec::new();
        for f in p.rows.iter().flat_map(|r| &r.flags) {
            if !flags.contains(f) {
                flags.push(f);
            }
        }
        let first = &p.rows[0];
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.snr_db,
            num(first.goodput_exact),
            num(first.goodput_asym),
            num(first.goodput_mc),
            num(p.goodput_mc_std_err),
            flags.join(";")
        )
        .map_err(runtime)?;
    }
    Ok(())
}

/// Agreement between the closed form and Monte Carlo over a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSummary {
    pub compared: usize,
    pub max_abs_z: f64,
    pub beyond_4se: usize,
    pub missing_closed_form: usize,
}

pub fn summarize_validation(points: &[SweepPoint]) -> ValidationSummary {
    let mut s = ValidationSummary { compared: 0, max_abs_z: 0.0, beyond_4se: 0, missing_closed_form: 0 };
    for p in points {
        let Some(table) = &p.mc else { continue };
        for (row, est) in p.rows.iter().zip(table) {
            let Some(exact) = row.p_exact_approx else {
                s.missing_closed_form += 1;
                continue;
            };
            // an estimate of 0 or 1 has zero binomial SE; use the one-hit scale instead
            let se = est.std_err.max(1.0 / est.trials_used as f64);
            let z = (exact - est.p_hat).abs() / se;
            s.compared += 1;
            s.max_abs_z = s.max_abs_z.max(z);
            s.beyond_4se += usize::from(z > 4.0);
        }
    }
    s
}
