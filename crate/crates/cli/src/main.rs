use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vnoma::mcsim::TrialPlan;
use vnoma_cli::dmt::{parse_vector, run_dmt, write_dmt};
use vnoma_cli::error::{invalid, runtime};
use vnoma_cli::optimize::{run_optimize, write_report, write_trace, Mode};
use vnoma_cli::scenario::PRESET_NAME;
use vnoma_cli::sweep::{run_outage_sweep, summarize_validation, write_goodput, write_rows, SweepPoint};
use vnoma_cli::{load_scenario, CliError, CliResult, Scenario};

const DEFAULT_TRIALS: u64 = 100_000;
const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(name = "vnoma", version, about = "Outage, goodput and resource allocation for virtual MIMO-NOMA downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed, overriding the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trial count, overriding the scenario.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Fill missing scenario values from a named preset (only `paper-v`).
    #[arg(long, global = true, value_parser = [PRESET_NAME])]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Outage table over the SNR sweep, one row per (snr, m, k).
    Outage {
        /// Also fill the Monte Carlo columns.
        #[arg(long)]
        validate: bool,
    },
    /// Goodput over the SNR sweep, one row per SNR.
    Goodput {
        #[arg(long)]
        validate: bool,
    },
    /// Optimize power, rates or both at the scenario SNR and print a JSON report.
    Optimize {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Stopping tolerance of the joint iteration.
        #[arg(long, default_value_t = vnoma::optim::DEFAULT_TOLERANCE)]
        tol: f64,
        #[arg(long, default_value_t = vnoma::optim::DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Write the per-iteration goodput trace (CSV) here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Outage table with Monte Carlo columns; prints a z-score summary to stderr.
    Validate,
    /// Diversity gains for multiplexing gains `--r` and power exponents `--upsilon`.
    Dmt {
        /// Comma-separated multiplexing gains, one per cluster. Repeatable.
        #[arg(long = "r", value_parser = parse_vector, required = true)]
        gains: Vec<Vec<f64>>,
        /// Comma-separated power exponents, one per cluster. Repeatable.
        #[arg(long = "upsilon", value_parser = parse_vector, required = true)]
        exponents: Vec<Vec<f64>>,
    },
}

fn scenario(common: &Common) -> CliResult<Scenario> {
    match (&common.config, &common.preset) {
        (Some(path), preset) => load_scenario(path, preset.is_some()),
        (None, Some(_)) => Ok(Scenario::preset()),
        (None, None) => Err(invalid("either --config or --preset is required")),
    }
}

fn trial_plan(common: &Common, scenario: &Scenario) -> CliResult<TrialPlan> {
    let mut plan = match scenario.mc {
        Some(p) => p,
        None => TrialPlan::new(DEFAULT_TRIALS, DEFAULT_SEED).map_err(invalid)?,
    };
    if let Some(t) = common.trials {
        plan.trials = t;
    }
    if let Some(s) = common.seed {
        plan.seed = s;
    }
    plan.validate().map_err(invalid)?;
    Ok(plan)
}

fn emit(common: &Common, bytes: &[u8]) -> CliResult<()> {
    match &common.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => std::io::stdout().lock().write_all(bytes).map_err(runtime),
    }
}

fn sweep(common: &Common, validate: bool) -> CliResult<(Scenario, Vec<SweepPoint>)> {
    let sc = scenario(common)?;
    let plan = validate.then(|| trial_plan(common, &sc)).transpose()?;
    let points = run_outage_sweep(&sc, plan.as_ref())?;
    for p in &points {
        if let Some(e) = &p.error {
            eprintln!("snr {} dB: {e}", p.snr_db);
        }
    }
    Ok((sc, points))
}

fn status(points: &[SweepPoint]) -> CliResult<()> {
    let bad = points.iter().flat_map(|p| &p.rows).filter(|r| r.has_error_flag()).count();
    if bad > 0 {
        return Err(CliError::Runtime(format!("{bad} rows carry an error flag")));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let common = &cli.common;
    let mut buf = Vec::new();
    match cli.command {
        Command::Outage { validate } => {
            let (_, points) = sweep(common, validate)?;
            write_rows(&mut buf, &points)?;
            emit(common, &buf)?;
            status(&points)
        }
        Command::Goodput { validate } => {
            let (_, points) = sweep(common, validate)?;
            write_goodput(&mut buf, &points)?;
            emit(common, &buf)?;
            status(&points)
        }
        Command::Validate => {
            let (_, points) = sweep(common, true)?;
            write_rows(&mut buf, &points)?;
            emit(common, &buf)?;
            let s = summarize_validation(&points);
            eprintln!(
                "compared {} entries: max |z| = {:.2}, {} beyond 4 SE, {} without closed form",
                s.compared, s.max_abs_z, s.beyond_4se, s.missing_closed_form
            );
            status(&points)
        }
        Command::Optimize { mode, tol, max_iter, trace } => {
            let sc = scenario(common)?;
            if !(tol > 0.0) || max_iter == 0 {
                return Err(invalid("--tol must be > 0 and --max-iter >= 1"));
            }
            let report = run_optimize(&sc, mode, tol, max_iter)?;
            write_report(&mut buf, &report)?;
            emit(common, &buf)?;
            if let Some(path) = trace {
                let mut t = Vec::new();
                write_trace(&mut t, &report)?;
                std::fs::write(&path, t).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Dmt { gains, exponents } => {
            let sc = scenario(common)?;
            let rows = run_dmt(&sc, &gains, &exponents)?;
            write_dmt(&mut buf, &rows)?;
            emit(common, &buf)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
