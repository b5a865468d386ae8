use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use tdep::coefficients::evaluate;
use tdep::costs::{Alpha, CostFamily, CostSpec};
use tdep::oracles::{gauss_dcov2_bivariate, gauss_marginal_tdep_bivariate, gauss_mutual_info, gauss_tdep_bivariate};
use tdep::synth::Noise;
use tdep::tdep::{tdep_with, SolverChoice, TdepOptions};
use tdep::testing::{permutation_test, power_estimate};

use crate::args::{parse_grid, require_seed, CoeffArgs, CostArgs, DataArgs, GeneratorArgs, GeometryArgs, PermArgs};
use crate::error::Result;
use crate::io::write_samples;

const SCHEMA: u32 = 1;

fn alpha_json(alpha: Alpha) -> Value {
    match alpha {
        Alpha::Finite(a) => json!(a),
        Alpha::Infinite => json!("inf"),
    }
}

fn cost_json(spec: &CostSpec) -> Value {
    let (family, alpha, beta_x) = match spec.family {
        CostFamily::Additive { alpha, beta_x } => ("additive", alpha_json(alpha), json!(beta_x)),
        CostFamily::MinMarginal { alpha, beta_x } => ("min", alpha_json(alpha), json!(beta_x)),
        CostFamily::RawPower => ("raw", Value::Null, Value::Null),
        CostFamily::NormalizedIsometric { .. } => ("normalized", Value::Null, Value::Null),
    };
    json!({
        "family": family,
        "alpha": alpha,
        "beta_x": beta_x,
        "p": spec.p,
        "metric_x": spec.metric_x.name(),
        "metric_y": spec.metric_y.name(),
    })
}

fn print_json(value: &Value, out: &mut impl Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(std::io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

/// Writes to `path`, or to `stdout` when no path is given.
fn with_output(path: Option<&Path>, stdout: &mut impl Write, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match path {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            body(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => body(stdout),
    }
}

pub fn compute(data: &DataArgs, cost: &CostArgs, solver: SolverChoice, merge_marginals: bool, out: &mut impl Write) -> Result<()> {
    let gamma = data.load()?;
    let spec = cost.spec();
    let opts = TdepOptions { merge_marginals, ..TdepOptions::with_solver(solver) };
    let r = tdep_with(&gamma, &spec, &opts)?;
    let value = json!({
        "schema": SCHEMA,
        "value": r.value,
        "bound_pi1": r.bound_pi1,
        "bound_pi2": r.bound_pi2,
        "bound_pi3": r.bound_pi3,
        "diam_x": r.diam_x,
        "diam_y": r.diam_y,
        "solver": r.solver.name(),
        "n": gamma.len(),
        "cost": cost_json(&spec),
    });
    print_json(&value, out)
}

pub fn corr(data: &DataArgs, coeff: &CoeffArgs, out: &mut impl Write) -> Result<()> {
    let req = coeff.request()?;
    let gamma = data.load()?;
    let v = evaluate(&gamma, &req)?;
    let value = json!({
        "schema": SCHEMA,
        "kind": v.kind.name(),
        "value": v.value,
        "n": gamma.len(),
        "p": req.p,
        "alpha": v.alpha,
        "solver": v.solver.map(|s| s.name()),
        "tau": v.tau,
        "diam_y": v.diam_y,
        "diam_x": v.diam_x,
    });
    print_json(&value, out)
}

pub fn test(data: &DataArgs, coeff: &CoeffArgs, perm: PermArgs, out: &mut impl Write) -> Result<()> {
    let req = coeff.request()?;
    let seed = require_seed(data.generator.seed)?;
    let gamma = data.load()?;
    let report = permutation_test(&gamma, &req, perm.m, perm.k, seed)?;
    let value = json!({
        "schema": SCHEMA,
        "coeff": req.kind.name(),
        "n": gamma.len(),
        "statistic": report.statistic,
        "perm_statistics": report.perm_statistics,
        "exceed_count": report.exceed_count,
        "m": report.m,
        "k": report.k,
        "reject": report.reject,
        "nominal_level": report.nominal_level,
        "seed": report.seed,
    });
    print_json(&value, out)
}

#[allow(clippy::too_many_arguments)]
pub fn power(
    geometry: &GeometryArgs,
    n: usize,
    runs: usize,
    epsilon_grid: &str,
    coeff: &CoeffArgs,
    perm: PermArgs,
    seed: Option<u64>,
    path: Option<&Path>,
    out: &mut impl Write,
) -> Result<()> {
    let req = coeff.request()?;
    let seed = require_seed(seed)?;
    let grid = parse_grid(epsilon_grid)?;
    let geometry = geometry.geometry();
    let mut rows = Vec::with_capacity(grid.len());
    for &eps in &grid {
        let est = power_estimate(&geometry, Noise::Contamination(eps), &req, runs, n, perm.m, perm.k, seed)?;
        rows.push((eps, est.power));
    }
    with_output(path, out, |w| {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["epsilon", "power"])?;
        for (eps, power) in rows {
            writer.write_record([eps.to_string(), power.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    })
}

pub fn gauss(rho_grid: &str, sigma1: f64, sigma2: f64, path: Option<&Path>, out: &mut impl Write) -> Result<()> {
    let grid = parse_grid(rho_grid)?;
    let mut rows = Vec::with_capacity(grid.len());
    for &rho in &grid {
        let tdep = gauss_tdep_bivariate(sigma1, sigma2, rho)?;
        // dcov² of (aX, bY) is ab times that of (X, Y).
        let dcov2 = gauss_dcov2_bivariate(1.0, rho)? * sigma1 * sigma2;
        let mi = if rho.abs() == 1.0 { f64::INFINITY } else { gauss_mutual_info(rho)? };
        rows.push([
            rho * rho,
            tdep,
            gauss_marginal_tdep_bivariate(sigma2, rho)?,
            dcov2,
            mi,
        ]);
    }
    with_output(path, out, |w| {
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record(["rho2", "tdep", "marginal_tdep", "dcov2", "mi"])?;
        for row in rows {
            writer.write_record(row.iter().map(|v| v.to_string()))?;
        }
        writer.flush()?;
        Ok(())
    })
}

pub fn synth(generator: &GeneratorArgs, path: Option<&Path>, out: &mut impl Write) -> Result<()> {
    let gamma = generator.sample()?;
    with_output(path, out, |w| write_samples(&gamma, w))
}
