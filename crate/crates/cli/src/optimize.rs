//! Power, rate and joint optimization reports.

use std::io::Write;

use serde::Serialize;
use vnoma::optim::{asymptotic_goodput, joint_optimize_with_phi, optimal_power, optimal_rate};
use vnoma::outage::{outage_report, phi_table, PowerAllocation, RatePlan, ThetaTable};

use crate::error::{runtime, CliResult};
use crate::scenario::{PowerMode, Scenario};
use crate::sweep::power_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Closed-form power for the scenario rates.
    Power,
    /// Per-entry optimal rates for the scenario power.
    Rate,
    /// Alternate power and rate steps from the scenario rates.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizeReport {
    pub mode: Mode,
    pub snr_db: f64,
    /// Row-major `M × K`, columns ordered from the nearest cluster.
    pub zeta: Vec<Vec<f64>>,
    pub rates: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    /// Asymptotic goodput without capping outage at 1, the optimizer's objective.
    pub goodput_asym: f64,
    /// Asymptotic goodput with each outage capped at 1.
    pub goodput_asym_clamped: f64,
    /// `None` when a closed-form outage could not be evaluated.
    pub goodput_exact: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn run_optimize(scenario: &Scenario, mode: Mode, tol: f64, max_iter: usize) -> CliResult<OptimizeReport> {
    let dep = scenario.deployment()?;
    let phi = phi_table(&dep).map_err(runtime)?;
    let (zeta, rates, theta, iterations, converged, trace): (PowerAllocation, RatePlan, ThetaTable, _, _, _) =
        match mode {
            Mode::Power => {
                let (z, t) = optimal_power(&scenario.rates, &phi).map_err(runtime)?;
                (z, scenario.rates.clone(), t, 1, true, Vec::new())
            }
            Mode::Rate => {
                let z = power_for(scenario, &dep, &scenario.rates).map_err(runtime)?;
                let (r, t) = optimal_rate(&z, &phi).map_err(runtime)?;
                (z, r, t, 1, true, Vec::new())
            }
            Mode::Joint => {
                let res = joint_optimize_with_phi(&scenario.rates, tol, max_iter, &phi).map_err(runtime)?;
                (res.zeta_star, res.rates_star, res.theta_star, res.iterations, res.converged, res.trace)
            }
        };
    let exact = outage_report(&dep, &zeta, &rates).map_err(runtime)?;
    Ok(OptimizeReport {
        mode,
        snr_db: scenario.system.snr_db,
        zeta: rows(zeta.matrix()),
        rates: rows(rates.matrix()),
        theta: rows(&theta.theta),
        goodput_asym: asymptotic_goodput(&phi, &theta, &rates, false),
        goodput_asym_clamped: asymptotic_goodput(&phi, &theta, &rates, true),
        goodput_exact: exact.goodput_exact,
        iterations,
        converged,
        trace,
    })
}

/// Scenario with its power fixed to the report's coefficients.
pub fn with_report_power(scenario: &Scenario, report: &OptimizeReport) -> CliResult<Scenario> {
    let z = PowerAllocation::from_rows(&report.zeta).map_err(runtime)?;
    Ok(Scenario { power: PowerMode::Explicit(z), ..scenario.clone() })
}

pub fn write_report<W: Write>(out: &mut W, report: &OptimizeReport) -> CliResult<()> {
    serde_json::to_writer_pretty(&mut *out, report).map_err(runtime)?;
    writeln!(out).map_err(runtime)
}

pub fn write_trace<W: Write>(out: &mut W, report: &OptimizeReport) -> CliResult<()> {
    writeln!(out, "iteration,goodput_asym").map_err(runtime)?;
    for (i, g) in report.trace.iter().enumerate() {
        writeln!(out, "{},{g:e}", i + 1).map_err(runtime)?;
    }
    Ok(())
}
