use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use repscatter_core::channel::{
    iterate_with, run_schedule, ChannelParams, CouplingSchedule, IterateOptions,
    RelaxationTrajectory, Retention,
};
use repscatter_core::charfn::{asymptotic_product, charfn_of_state, z_grid, CharFn};
use repscatter_core::fock::{beta_for_mean_photon, thermal_state_with_mean, DensityMatrix};
use repscatter_core::measures::{measure_report, trace_distance, MeasureReport};
use repscatter_core::{fmt_num, C64};

use crate::config::{Scenario, ScenarioConfig, StateSpec};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TOOL: &str = "repscatter";
/// Relative accuracy requested from the infinite product.
const PRODUCT_TOL: f64 = 1e-12;

/// Outcome of one scenario, held in memory until written out.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub config_echo: ScenarioConfig,
    pub results: Value,
    pub version: String,
    pub wall_time_seconds: f64,
    /// Plot tables as `(file name, CSV text)`.
    #[serde(skip)]
    pub tables: Vec<(String, String)>,
}

impl RunRecord {
    pub fn table(&self, name: &str) -> Option<&str> {
        self.tables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
    }
}

type Computed = (Value, Vec<(String, String)>);

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunRecord, CliError> {
    config.validate()?;
    let t0 = Instant::now();
    let (results, tables) = match config.scenario {
        Scenario::Relax => relax(config)?,
        Scenario::ProductCompare => product_compare(config)?,
        Scenario::LambdaSweep => lambda_sweep(config)?,
        Scenario::Vanhove => vanhove(config)?,
        Scenario::Measures => measures(config)?,
    };
    Ok(RunRecord {
        config_echo: config.clone(),
        results,
        version: VERSION.to_string(),
        wall_time_seconds: t0.elapsed().as_secs_f64(),
        tables,
    })
}

fn numerical(context: impl Into<String>) -> impl FnOnce(repscatter_core::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Numerical { context, source }
}

fn build_state(
    spec: StateSpec,
    config: &ScenarioConfig,
    which: &str,
) -> Result<DensityMatrix, CliError> {
    spec.build(config.cutoff()).map_err(numerical(format!(
        "{} scenario, building {which}",
        config.scenario
    )))
}

fn relax_at(
    config: &ScenarioConfig,
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    lambda: f64,
) -> Result<RelaxationTrajectory, CliError> {
    let context = format!("{} scenario at λ = {lambda}", config.scenario);
    let params = ChannelParams::new(lambda, config.cutoff()).map_err(numerical(context.clone()))?;
    let options = IterateOptions {
        tol: config.tol,
        max_steps: config.max_steps,
        retention: Retention::Endpoints,
    };
    iterate_with(rho0, sigma, &params, options).map_err(numerical(context))
}

/// Like [`relax_at`], but a run that hits the step limit is an error.
fn fixed_point_at(
    config: &ScenarioConfig,
    rho0: &DensityMatrix,
    sigma: &DensityMatrix,
    lambda: f64,
) -> Result<(DensityMatrix, usize), CliError> {
    let traj = relax_at(config, rho0, sigma, lambda)?;
    match traj.converged_at {
        Some(steps) => Ok((traj.final_state().clone(), steps)),
        None => Err(CliError::NoConvergence {
            context: format!(
                "{} scenario at λ = {lambda}: no fixed point within {} steps (last trace distance {:.3e}, tol {:e})",
                config.scenario,
                config.max_steps,
                traj.distances.last().copied().unwrap_or(f64::NAN),
                config.tol
            ),
        }),
    }
}

/// Thermal state with the reservoir's mean photon number.
fn thermal_target(
    config: &ScenarioConfig,
    sigma: &DensityMatrix,
) -> Result<(f64, DensityMatrix), CliError> {
    let n_bar = sigma.mean_photon_number().max(0.0);
    let target = thermal_state_with_mean(n_bar, config.cutoff()).map_err(numerical(format!(
        "{} scenario, thermal target",
        config.scenario
    )))?;
    Ok((n_bar, target))
}

fn reservoir_charfn(spec: StateSpec) -> Result<CharFn, CliError> {
    match spec {
        StateSpec::Thermal(beta) => {
            CharFn::thermal(beta).map_err(numerical("reservoir characteristic function"))
        }
        StateSpec::Fock(n) => Ok(CharFn::fock(n)),
        StateSpec::Coherent(a) => Ok(CharFn::coherent(a.value())),
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for row in rows {
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

fn relax(config: &ScenarioConfig) -> Result<Computed, CliError> {
    let sigma = build_state(config.sigma(), config, "sigma")?;
    let rho0 = build_state(config.rho0_spec.as_state(), config, "rho0")?;
    let lambda = config.lambdas()[0];
    let traj = relax_at(config, &rho0, &sigma, lambda)?;
    let last = traj.final_state();
    let to_sigma = trace_distance(last, &sigma).map_err(numerical("relax scenario"))?;
    let results = json!({
        "lambda": lambda,
        "steps": traj.steps(),
        "converged_at": traj.converged_at,
        "final_step_distance": traj.distances.last(),
        "distance_to_sigma": to_sigma,
        "final_mean_photon": last.mean_photon_number(),
        "final_purity": traj.purity.last(),
    });
    // row k: trace distance between ρ_{k−1} and ρ_k
    let table = csv(
        "step,trace_distance",
        traj.distances
            .iter()
            .enumerate()
            .map(|(k, d)| vec![(k + 1).to_string(), fmt_num(*d)]),
    );
    Ok((results, vec![("relaxation.csv".into(), table)]))
}

fn product_compare(config: &ScenarioConfig) -> Result<Computed, CliError> {
    let sigma = build_state(config.sigma(), config, "sigma")?;
    let rho0 = build_state(config.rho0_spec.as_state(), config, "rho0")?;
    let lambda = config.lambdas()[0];
    let (fp, steps) = fixed_point_at(config, &rho0, &sigma, lambda)?;
    let chi_iter = charfn_of_state(&fp).map_err(numerical("product_compare scenario"))?;
    let chi_sigma = reservoir_charfn(config.sigma())?;
    let params = ChannelParams::new(lambda, config.cutoff())
        .map_err(numerical("product_compare scenario"))?;
    let grid = z_grid(config.z_grid.points, config.z_grid.r_max);
    let mut rows = Vec::with_capacity(grid.len());
    let mut worst = (0.0_f64, C64::new(0.0, 0.0));
    for &z in &grid {
        let ctx = || format!("product_compare scenario at z = {z}");
        let a = chi_iter.eval(z).map_err(numerical(ctx()))?;
        let b = asymptotic_product(&chi_sigma, &params, z, PRODUCT_TOL)
            .map_err(numerical(ctx()))?
            .value;
        let diff = (a - b).norm();
        if diff > worst.0 {
            worst = (diff, z);
        }
        rows.push(vec![
            fmt_num(z.norm()),
            fmt_num(a.norm()),
            fmt_num(b.norm()),
            fmt_num(diff),
        ]);
    }
    let results = json!({
        "lambda": lambda,
        "steps": steps,
        "grid_points": grid.len(),
        "max_abs_diff": worst.0,
        "max_abs_diff_at": [worst.1.re, worst.1.im],
    });
    let table = csv("r,abs_chi_iter,abs_chi_product,abs_diff", rows);
    Ok((results, vec![("chi_profile.csv".into(), table)]))
}

/// Couplings in decreasing order, the direction in which the weak-coupling
/// limit is approached; results do not depend on completion order.
fn sorted_lambdas(config: &ScenarioConfig) -> Vec<f64> {
    let mut lambdas = config.lambdas();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    lambdas.dedup();
    lambdas
}

fn lambda_sweep(config: &ScenarioConfig) -> Result<Computed, CliError> {
    let sigma = build_state(config.sigma(), config, "sigma")?;
    let rho0 = build_state(config.rho0_spec.as_state(), config, "rho0")?;
    let (n_bar, target) = thermal_target(config, &sigma)?;
    let lambdas = sorted_lambdas(config);
    let points: Vec<(f64, usize, f64, f64, f64)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let (fp, steps) = fixed_point_at(config, &rho0, &sigma, lambda)?;
            let d = trace_distance(&fp, &target).map_err(numerical("lambda_sweep scenario"))?;
            let p = repscatter_core::measures::purity(&fp);
            Ok((lambda, steps, d, fp.mean_photon_number(), p))
        })
        .collect::<Result<_, CliError>>()?;
    let results = json!({
        "target_mean_photon": n_bar,
        "target_beta": beta_for_mean_photon(n_bar),
        "points": points.iter().map(|(l, s, d, n, p)| json!({
            "lambda": l, "steps": s, "distance_to_thermal": d, "mean_photon": n, "purity": p,
        })).collect::<Vec<_>>(),
    });
    let table = csv(
        "lambda,steps,distance_to_thermal,mean_photon,purity",
        points.iter().map(|(l, s, d, n, p)| {
            vec![
                fmt_num(*l),
                s.to_string(),
                fmt_num(*d),
                fmt_num(*n),
                fmt_num(*p),
            ]
        }),
    );
    Ok((results, vec![("lambda_sweep.csv".into(), table)]))
}

fn vanhove(config: &ScenarioConfig) -> Result<Computed, CliError> {
    let sigma = build_state(config.sigma(), config, "sigma")?;
    let rho0 = build_state(config.rho0_spec.as_state(), config, "rho0")?;
    let (n_bar, target) = thermal_target(config, &sigma)?;
    let mut ks = config.van_hove_ks();
    ks.sort_unstable();
    ks.dedup();
    let points: Vec<(usize, f64, f64, f64)> = ks
        .par_iter()
        .map(|&k| {
            let ctx = format!("vanhove scenario at K = {k}");
            let schedule = CouplingSchedule::van_hove_fixed(k).map_err(numerical(ctx.clone()))?;
            let traj = run_schedule(&rho0, &sigma, &schedule, config.cutoff())
                .map_err(numerical(ctx.clone()))?;
            let last = traj.final_state();
            let d = trace_distance(last, &target).map_err(numerical(ctx))?;
            Ok((k, schedule.values()[0], d, last.mean_photon_number()))
        })
        .collect::<Result<_, CliError>>()?;
    let results = json!({
        "target_mean_photon": n_bar,
        "points": points.iter().map(|(k, l, d, n)| json!({
            "k": k, "lambda": l, "distance_to_thermal": d, "mean_photon": n,
        })).collect::<Vec<_>>(),
    });
    let table = csv(
        "k,lambda,distance_to_thermal,mean_photon",
        points
            .iter()
            .map(|(k, l, d, n)| vec![k.to_string(), fmt_num(*l), fmt_num(*d), fmt_num(*n)]),
    );
    Ok((results, vec![("vanhove.csv".into(), table)]))
}

fn measures(config: &ScenarioConfig) -> Result<Computed, CliError> {
    let sigma = build_state(config.sigma(), config, "sigma")?;
    let rho0 = build_state(config.rho0_spec.as_state(), config, "rho0")?;
    let of_sigma =
        measure_report(&sigma).map_err(numerical("measures scenario, reservoir state"))?;
    let lambdas = sorted_lambdas(config);
    let points: Vec<(f64, MeasureReport)> = lambdas
        .par_iter()
        .map(|&lambda| {
            let (fp, _) = fixed_point_at(config, &rho0, &sigma, lambda)?;
            let report = measure_report(&fp)
                .map_err(numerical(format!("measures scenario at λ = {lambda}")))?;
            Ok((lambda, report))
        })
        .collect::<Result<_, CliError>>()?;
    let results = json!({
        "sigma": of_sigma,
        "points": points.iter().map(|(l, r)| json!({"lambda": l, "measures": r})).collect::<Vec<_>>(),
    });
    let table = csv(
        "lambda,purity,entropy,qcs_squared",
        points.iter().map(|(l, r)| {
            vec![
                fmt_num(*l),
                fmt_num(r.purity),
                fmt_num(r.entropy),
                fmt_num(r.qcs_squared),
            ]
        }),
    );
    Ok((results, vec![("measures_vs_lambda.csv".into(), table)]))
}

/// Versions and config only; no timings, so identical configs give
/// identical manifests.
pub fn manifest(record: &RunRecord) -> Value {
    let mut outputs: Vec<&str> = record.tables.iter().map(|(n, _)| n.as_str()).collect();
    outputs.push("results.json");
    json!({
        "tool": TOOL,
        "version": record.version,
        "scenario": record.config_echo.scenario,
        "config": record.config_echo,
        "outputs": outputs,
    })
}

/// Writes every output of `record` into `dir`, staging them first so that
/// nothing is left behind when a write fails. Returns the written paths.
pub fn write_outputs(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let staging = dir.with_file_name(format!(".{name}.staging-{}", std::process::id()));
    let result = stage_and_publish(record, dir, &staging);
    if staging.exists() {
        let _ = fs::remove_dir_all(&staging);
    }
    result
}

fn stage_and_publish(
    record: &RunRecord,
    dir: &Path,
    staging: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(staging).map_err(|e| CliError::io(staging, e))?;
    let mut files: Vec<(String, String)> = record.tables.clone();
    let results = serde_json::to_string_pretty(record).expect("record serializes");
    files.push(("results.json".into(), results + "\n"));
    let manifest = serde_json::to_string_pretty(&manifest(record)).expect("manifest serializes");
    files.push(("manifest.json".into(), manifest + "\n"));
    for (file, text) in &files {
        let path = staging.join(file);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::with_capacity(files.len());
    for (file, _) in &files {
        let to = dir.join(file);
        fs::rename(staging.join(file), &to).map_err(|e| CliError::io(&to, e))?;
        written.push(to);
    }
    Ok(written)
}
