//! Scenario files.
//!
//! A scenario is a TOML document with the sections `[system]`, `[clusters]`,
//! `[rates]`, `[power]`, and optionally `[sweep]` and `[mc]`. A top-level
//! `preset = "paper-v"` fills every missing value from the reference
//! deployment; keys present in the file win.

use std::path::Path;

use serde::Deserialize;
use vnoma::corrchan::{sort_clusters, ClusterSet, Deployment, SystemConfig};
use vnoma::mcsim::TrialPlan;
use vnoma::outage::{PowerAllocation, RatePlan};
use vnoma::preset;

use crate::error::{invalid, CliError, CliResult};

pub const PRESET_NAME: &str = "paper-v";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    preset: Option<String>,
    system: Option<RawSystem>,
    clusters: Option<RawClusters>,
    rates: Option<RawRates>,
    power: Option<RawPower>,
    sweep: Option<RawSweep>,
    mc: Option<RawMc>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n_t: Option<usize>,
    n_r: Option<usize>,
    n_streams: Option<usize>,
    alpha: Option<f64>,
    k_friis: Option<f64>,
    snr_db: Option<f64>,
    rho_t: Option<f64>,
    rho_r: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClusters {
    positions: Option<Vec<[f64; 2]>>,
    distances: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    value: Option<f64>,
    matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPower {
    mode: Option<String>,
    epsilon: Option<f64>,
    matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    start_db: f64,
    stop_db: f64,
    step_db: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    trials: u64,
    seed: u64,
    partitions: Option<usize>,
    antithetic: Option<bool>,
}

/// How the power coefficients are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum PowerMode {
    /// The SIC-ordered default recursion with parameter `epsilon`.
    Default {
        epsilon: f64,
    },
    Explicit(PowerAllocation),
    /// Closed-form optimum for the scenario rates, recomputed per SNR.
    Optimized,
}

/// Inclusive SNR grid in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepGrid {
    pub start_db: f64,
    pub stop_db: f64,
    pub step_db: f64,
}

impl SweepGrid {
    pub fn new(start_db: f64, stop_db: f64, step_db: f64) -> CliResult<Self> {
        if !(step_db > 0.0 && step_db.is_finite()) {
            return Err(invalid(format!("sweep step_db must be > 0, got {step_db}")));
        }
        if !(start_db.is_finite() && stop_db.is_finite() && stop_db >= start_db) {
            return Err(invalid(format!("sweep needs finite start_db <= stop_db, got {start_db}..{stop_db}")));
        }
        Ok(Self { start_db, stop_db, step_db })
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop_db - self.start_db) / self.step_db + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start_db + i as f64 * self.step_db).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: SystemConfig,
    pub clusters: ClusterSet,
    pub rates: RatePlan,
    pub power: PowerMode,
    pub sweep: Option<SweepGrid>,
    pub mc: Option<TrialPlan>,
}

impl Scenario {
    pub fn deployment(&self) -> CliResult<Deployment> {
        Deployment::new(self.system.clone(), self.clusters.clone()).map_err(invalid)
    }

    /// SNR points of the sweep, or the system SNR alone.
    pub fn snr_points(&self) -> Vec<f64> {
        self.sweep.map_or_else(|| vec![self.system.snr_db], |g| g.points())
    }

    /// The reference deployment as a scenario.
    pub fn preset() -> Self {
        let dep = preset::reference_deployment();
        let rates = preset::reference_rates(&dep);
        Scenario {
            system: dep.cfg,
            clusters: dep.clusters,
            rates,
            power: PowerMode::Default { epsilon: preset::EPSILON },
            sweep: None,
            mc: None,
        }
    }
}

pub fn load_scenario(path: &Path, force_preset: bool) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text, force_preset)
}

fn missing(what: &str) -> CliError {
    CliError::Validation(format!("missing {what}"))
}

fn matrix(rows: &[Vec<f64>], what: &str) -> CliResult<nalgebra::DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(invalid(format!("{what} must be a non-empty rectangular array")));
    }
    Ok(nalgebra::DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Parses and validates a scenario. With `force_preset` the reference
/// values fill gaps even when the file does not ask for them.
pub fn parse_scenario(text: &str, force_preset: bool) -> CliResult<Scenario> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))?;
    let use_preset = match raw.preset.as_deref() {
        None => force_preset,
        Some(PRESET_NAME) => true,
        Some(other) => return Err(invalid(format!("unknown preset {other:?}, expected {PRESET_NAME:?}"))),
    };
    let base = use_preset.then(Scenario::preset);
    let bs = base.as_ref().map(|b| &b.system);

    let sys = raw.system.unwrap_or_default();
    if bs.is_none() && sys.n_t.is_none() && sys.snr_db.is_none() {
        return Err(missing("[system] section"));
    }
    macro_rules! pick {
        ($field:ident) => {
            sys.$field.or(bs.map(|b| b.$field)).ok_or_else(|| missing(concat!("system.", stringify!($field))))?
        };
    }
    let system = SystemConfig::new(
        pick!(n_t),
        pick!(n_r),
        pick!(n_streams),
        pick!(alpha),
        pick!(k_friis),
        pick!(snr_db),
        pick!(rho_t),
        pick!(rho_r),
    )
    .map_err(invalid)?;

    let clusters = match raw.clusters {
        Some(RawClusters { positions: Some(_), distances: Some(_) }) => {
            return Err(invalid("[clusters] takes either positions or distances, not both"))
        }
        Some(RawClusters { positions: Some(p), .. }) => {
            sort_clusters(&p, system.alpha, system.k_friis).map_err(invalid)?
        }
        Some(RawClusters { distances: Some(d), .. }) => {
            ClusterSet::from_distances(&d, system.alpha, system.k_friis).map_err(invalid)?
        }
        Some(_) => return Err(missing("clusters.positions or clusters.distances")),
        None => match &base {
            // path loss depends on alpha and k_friis, so re-sort with the final values
            Some(_) => sort_clusters(&preset::CLUSTERS, system.alpha, system.k_friis).map_err(invalid)?,
            None => return Err(missing("[clusters] section")),
        },
    };
    let (mm, kk) = (system.n_streams, clusters.len());

    let rates = match raw.rates {
        Some(RawRates { value: Some(_), matrix: Some(_) }) => {
            return Err(invalid("[rates] takes either value or matrix, not both"))
        }
        Some(RawRates { value: Some(v), .. }) => RatePlan::broadcast(v, mm, kk).map_err(invalid)?,
        Some(RawRates { matrix: Some(rows), .. }) => RatePlan::new(matrix(&rows, "rates.matrix")?).map_err(invalid)?,
        Some(_) => return Err(missing("rates.value or rates.matrix")),
        None if base.is_some() => RatePlan::broadcast(preset::RATE, mm, kk).map_err(invalid)?,
        None => return Err(missing("[rates] section")),
    };
    if rates.matrix().shape() != (mm, kk) {
        return Err(invalid(format!("rates are {:?} but the scenario has M={mm}, K={kk}", rates.matrix().shape())));
    }

    let power = match raw.power {
        Some(p) => match p.mode.as_deref() {
            Some("default") if p.matrix.is_none() => PowerMode::Default {
                epsilon: p
                    .epsilon
                    .or(base.as_ref().map(|_| preset::EPSILON))
                    .ok_or_else(|| missing("power.epsilon"))?,
            },
            Some("explicit") if p.epsilon.is_none() => {
                let rows = p.matrix.ok_or_else(|| missing("power.matrix"))?;
                let z = PowerAllocation::new(matrix(&rows, "power.matrix")?).map_err(invalid)?;
                if z.matrix().shape() != (mm, kk) {
                    return Err(invalid(format!("power.matrix is {:?}, expected ({mm}, {kk})", z.matrix().shape())));
                }
                PowerMode::Explicit(z)
            }
            Some("optimized") if p.epsilon.is_none() && p.matrix.is_none() => PowerMode::Optimized,
            Some(m @ ("default" | "explicit" | "optimized")) => {
                return Err(invalid(format!("power mode {m:?} given keys that belong to another mode")))
            }
            Some(other) => {
                return Err(invalid(format!("power.mode must be default, explicit or optimized, got {other:?}")))
            }
            None => return Err(missing("power.mode")),
        },
        None => base.as_ref().map(|b| b.power.clone()).ok_or_else(|| missing("[power] section"))?,
    };

    let sweep = raw.sweep.map(|s| SweepGrid::new(s.start_db, s.stop_db, s.step_db)).transpose()?;
    let mc = raw
        .mc
        .map(|m| -> CliResult<TrialPlan> {
            let mut plan = TrialPlan::new(m.trials, m.seed).map_err(invalid)?;
            if let Some(p) = m.partitions {
                plan = plan.with_partitions(p).map_err(invalid)?;
            }
            plan.antithetic = m.antithetic.unwrap_or(false);
            Ok(plan)
        })
        .transpose()?;

    let scenario = Scenario { system, clusters, rates, power, sweep, mc };
    scenario.deployment()?;
    Ok(scenario)
}
