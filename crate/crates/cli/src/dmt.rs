//! Diversity-multiplexing tradeoff tables.

use std::io::Write;

use vnoma::outage::dmt_gain;

use crate::error::{invalid, runtime, CliResult};
use crate::scenario::Scenario;

pub const HEADER: &str = "case,m,k,r,upsilon,d_star";

#[derive(Debug, Clone, PartialEq)]
pub struct DmtRow {
    pub case: usize,
    pub m: usize,
    pub k: usize,
    pub r: f64,
    pub upsilon: f64,
    pub d_star: f64,
}

/// Tabulates `d*` for each case. Case `i` pairs the `i`-th multiplexing
/// vector with the `i`-th power-exponent vector; a single exponent vector is
/// shared by all cases.
pub fn run_dmt(scenario: &Scenario, gains: &[Vec<f64>], exponents: &[Vec<f64>]) -> CliResult<Vec<DmtRow>> {
    if gains.is_empty() || exponents.is_empty() {
        return Err(invalid("dmt needs at least one --r and one --upsilon vector"));
    }
    if exponents.len() != 1 && exponents.len() != gains.len() {
        return Err(invalid(format!("{} --r vectors but {} --upsilon vectors", gains.len(), exponents.len())));
    }
    let kk = scenario.clusters.len();
    let mut out = Vec::new();
    for (case, r) in gains.iter().enumerate() {
        let ups = &exponents[if exponents.len() == 1 { 0 } else { case }];
        if r.len() != kk || ups.len() != kk {
            return Err(invalid(format!("case {}: vectors must have K = {kk} entries", case + 1)));
        }
        let d = dmt_gain(r, ups, &scenario.system).map_err(|e| invalid(format!("case {}: {e}", case + 1)))?;
        for m in 0..scenario.system.n_streams {
            for k in 0..kk {
                out.push(DmtRow { case: case + 1, m: m + 1, k: k + 1, r: r[k], upsilon: ups[k], d_star: d[k] });
            }
        }
    }
    Ok(out)
}

pub fn write_dmt<W: Write>(out: &mut W, rows: &[DmtRow]) -> CliResult<()> {
    writeln!(out, "{HEADER}").map_err(runtime)?;
    for r in rows {
        writeln!(out, "{},{},{},{:e},{:e},{:e}", r.case, r.m, r.k, r.r, r.upsilon, r.d_star).map_err(runtime)?;
    }
    Ok(())
}

/// Parses `"0.1,0.2,0"` into a vector.
pub fn parse_vector(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect()
}
