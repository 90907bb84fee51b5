//! CSV and text renderings of results.

use std::io::Write;

use crate::feller::FellerReport;
use crate::model::{PhysicalParams, StateVec};
use crate::montecarlo::SimulationRun;
use crate::riccati::{RiccatiError, RiccatiTable};

pub const SIMULATION_HEADER: [&str; 8] = [
    "maturity_q",
    "analytic_yield_pct",
    "mc_yield_pct",
    "diff_bp",
    "ci_lo_bp",
    "ci_hi_bp",
    "floor_frac_v1",
    "floor_frac_v2",
];

pub fn write_simulation_csv(run: &SimulationRun, writer: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SIMULATION_HEADER)?;
    for e in &run.estimates {
        w.write_record([
            e.maturity.to_string(),
            e.analytic_yield.to_string(),
            e.yield_point.to_string(),
            e.diff_bp.to_string(),
            e.diff_ci_bp[0].to_string(),
            e.diff_ci_bp[1].to_string(),
            e.floor_frac[0].to_string(),
            e.floor_frac[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Annualized analytic yields in percent for maturities `1..=table.max_maturity()`.
pub fn write_yields_csv(
    table: &RiccatiTable<f64>,
    x: StateVec<f64>,
    writer: impl Write,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["maturity_q", "yield_pct"])?;
    for n in 1..=table.max_maturity() {
        let y = table
            .analytic_yield_annual(x, n)
            .map_err(|e: RiccatiError| csv::Error::from(std::io::Error::other(e.to_string())))?;
        w.write_record([n.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

/// One line per condition and a closing `overall` line.
pub fn feller_text(report: &FellerReport<f64>) -> String {
    let mut out = format!("measure {}\n", report.measure);
    for c in &report.conditions {
        out.push_str(&format!(
            "{:<4} {:<9} lhs={:+.6e} rhs={:+.6e} margin={:+.6e} {}\n",
            c.id,
            c.kind.label(),
            c.lhs,
            c.rhs,
            c.margin,
            verdict(c.pass)
        ));
    }
    out.push_str(&format!("overall {}\n", verdict(report.overall)));
    out
}

pub fn feller_json(report: &FellerReport<f64>) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

/// `parameter,value` rows for every scalar of `p`.
pub fn params_csv(p: &PhysicalParams<f64>, loglik: Option<f64>) -> String {
    let mut rows = vec![("kind".to_string(), p.kind.label().to_string())];
    let mut num = |name: String, v: f64| rows.push((name, v.to_string()));
    for i in 0..2 {
        for j in 0..2 {
            num(format!("a_hat[{i}][{j}]"), p.a_hat.at(i, j));
        }
    }
    for i in 0..2 {
        num(format!("b_hat[{i}]"), p.b_hat.0[i]);
    }
    if let Ok(x) = p.equilibrium_state() {
        for i in 0..2 {
            num(format!("equilibrium[{i}]"), x.0[i]);
        }
    }
    for i in 0..2 {
        num(format!("alpha[{i}]"), p.alpha.0[i]);
    }
    for i in 0..2 {
        for j in 0..2 {
            num(format!("beta[{i}][{j}]"), p.beta.at(i, j));
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            num(format!("sigma[{i}][{j}]"), p.sigma.at(i, j));
        }
    }
    for i in 0..2 {
        num(format!("lambda[{i}]"), p.lambda.0[i]);
    }
    num("omega_pi".into(), p.omega_pi);
    num("omega_s".into(), p.omega_s);
    num("nu[0]".into(), p.nu0);
    num("nu[1]".into(), p.nu1);
    num("nu[2]".into(), p.nu2);
    if let Some(l) = loglik {
        num("loglik".into(), l);
    }
    let mut out = String::from("parameter,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}
