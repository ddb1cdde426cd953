//! Executes a parsed experiment and persists its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use dunkl_core::mc_lab::{self, fit_order, regime_warnings};
use dunkl_core::model::{ModelSpec, Status};
use dunkl_core::scheme::{truncation_level, BrownianDriver, PathResult, PathSimulator, SchemeConfig, Variant};

use crate::config::{ExperimentConfig, Plan};
use crate::output::{json_number, unix_ms, write_atomic, Cell, FileEntry, Manifest, Table};

/// Samples used by the pre-flight assumption check.
const PREFLIGHT_SAMPLES: usize = 1000;
const PREFLIGHT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("standing assumptions fail: {0}")]
    Assumptions(String),
    #[error(transparent)]
    Core(#[from] dunkl_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Config(_) | CliError::Assumptions(_) => 2,
            CliError::Core(e) if e.is_solver_failure() => 3,
            CliError::Core(_) => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Everything an experiment produced, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub results: Value,
    /// Human-readable lines for stdout.
    pub report: Vec<String>,
    /// False when a `validate` experiment found a failing condition.
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<FileEntry>,
    pub report: Vec<String>,
    pub passed: bool,
}

fn preflight(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.override_assumptions || matches!(cfg.plan, Plan::Validate { .. }) {
        return Ok(());
    }
    let report = cfg.model.validate_assumptions(PREFLIGHT_SAMPLES, PREFLIGHT_TOL, cfg.seed);
    let failed: Vec<String> = report
        .outcomes
        .iter()
        .filter(|o| o.status == Status::Fail)
        .map(|o| format!("({}) {}", o.condition.label(), o.detail))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Assumptions(format!(
            "{}; set run.override_assumptions to simulate anyway",
            failed.join("; ")
        )))
    }
}

/// Runs the experiment on the configured thread budget without writing files.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    preflight(cfg)?;
    mc_lab::with_threads(cfg.threads, || execute_plan(cfg))?
}

fn execute_plan(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let model = &cfg.model;
    let seed = cfg.seed;
    match &cfg.plan {
        Plan::Simulate { n, paths, dump_paths } => simulate(model, &cfg.scheme.with_steps(*n), *paths, seed, *dump_paths),
        Plan::Convergence { n_list, n_ref, paths } => {
            let curve = mc_lab::strong_error(model, &cfg.scheme, n_list, *n_ref, *paths, seed)?;
            let mut table = Table::new("convergence", &["n", "rms_sup_error", "std_error", "M", "n_ref"]);
            for i in 0..curve.steps.len() {
                table.push(vec![
                    curve.steps[i].into(),
                    curve.rms_sup_error[i].into(),
                    curve.std_error[i].into(),
                    curve.paths.into(),
                    curve.reference_steps.into(),
                ]);
            }
            let fit = fit_order(&curve);
            let mut report = curve.warnings.iter().map(|w| format!("warning: {w}")).collect::<Vec<_>>();
            match &fit {
                Ok(f) => report.push(format!("fitted order: error ~ n^{:.4} (+/- {:.4})", f.slope, f.half_width)),
                Err(e) => report.push(format!("no order fit: {e}")),
            }
            Ok(Outcome {
                tables: vec![table],
                results: json!({ "curve": curve, "fit": fit.ok() }),
                report,
                passed: true,
            })
        }
        Plan::Moments { n, paths, p, pathwise_sup } => {
            let r = mc_lab::negative_moments(model, &cfg.scheme.with_steps(*n), *p, *paths, seed, *pathwise_sup)?;
            let mut table = Table::new("moments", &["root_index", "t", "p", "estimate", "std_error"]);
            for (i, (est, se)) in r.estimates.iter().zip(&r.std_errors).enumerate() {
                for (l, t) in r.times.iter().enumerate() {
                    table.push(vec![i.into(), (*t).into(), r.p.into(), est[l].into(), se[l].into()]);
                }
            }
            let mut report = r.warnings.iter().map(|w| format!("warning: {w}")).collect::<Vec<_>>();
            report.push(format!("max estimate over roots and times: {}", r.max_estimate));
            if let Some(sup) = &r.pathwise_sup {
                report.push(format!("pathwise-sup moments per root: {sup:?}"));
            }
            Ok(Outcome {
                tables: vec![table],
                results: json!({
                    "p": r.p,
                    "steps": r.steps,
                    "paths": r.paths,
                    "max_estimate": json_number(r.max_estimate),
                    "pathwise_sup": r.pathwise_sup,
                    "pathwise_sup_std_error": r.pathwise_sup_std_error,
                    "warnings": r.warnings,
                }),
                report,
                passed: true,
            })
        }
        Plan::Increments { n, paths, lags } => {
            let r = mc_lab::increment_scaling(model, &cfg.scheme.with_steps(*n), lags, *paths, seed)?;
            let mut table = Table::new("increments", &["lag", "tau", "mean_sq_increment", "std_error"]);
            for i in 0..r.lags.len() {
                table.push(vec![r.lags[i].into(), r.taus[i].into(), r.mean_sq[i].into(), r.std_error[i].into()]);
            }
            let report = vec![match &r.fit {
                Some(f) => format!("E|X(t+tau)-X(t)|^2 ~ tau^{:.4} (+/- {:.4})", f.slope, f.half_width),
                None => "fewer than three positive lags; no slope fit".to_string(),
            }];
            Ok(Outcome {
                tables: vec![table],
                results: json!({ "increments": r }),
                report,
                passed: true,
            })
        }
        Plan::ChamberExit { n_list, paths } => {
            let r = mc_lab::chamber_exit(model, &cfg.scheme, n_list, *paths, seed)?;
            let mut table = Table::new("exit", &["n", "exit_fraction", "ci_low", "ci_high"]);
            for i in 0..r.steps.len() {
                table.push(vec![
                    r.steps[i].into(),
                    r.exit_fraction[i].into(),
                    r.ci_low[i].into(),
                    r.ci_high[i].into(),
                ]);
            }
            let mut report = r.warnings.iter().map(|w| format!("warning: {w}")).collect::<Vec<_>>();
            report.push(format!("exits per n: {:?} of {} paths", r.exits, r.paths));
            if let Some(f) = &r.fit {
                report.push(format!("exit fraction ~ n^{:.4} (+/- {:.4})", f.slope, f.half_width));
            }
            Ok(Outcome {
                tables: vec![table],
                results: json!({ "exit": r }),
                report,
                passed: true,
            })
        }
        Plan::CirCheck {
            n,
            paths,
            sigma0,
            lambda0,
            k0,
            xi,
        } => {
            let r = mc_lab::cir_mean_check(
                *sigma0,
                *lambda0,
                *k0,
                *xi,
                model.horizon(),
                cfg.scheme.theta,
                *n,
                *paths,
                seed,
            )?;
            let mut table = Table::new(
                "cir",
                &["n", "M", "exact_mean", "estimate", "std_error", "z_score", "bias_allowance", "within"],
            );
            table.push(vec![
                (*n).into(),
                (*paths).into(),
                r.exact_mean.into(),
                r.estimate.into(),
                r.std_error.into(),
                r.z_score.into(),
                r.bias_allowance.into(),
                r.within.into(),
            ]);
            Ok(Outcome {
                tables: vec![table],
                results: json!({ "cir": r }),
                report: vec![format!(
                    "mean of X(T)^2: {} vs exact {} (z = {:.3}, within tolerance: {})",
                    r.estimate, r.exact_mean, r.z_score, r.within
                )],
                passed: true,
            })
        }
        Plan::Validate { samples, tol } => {
            let r = model.validate_assumptions(*samples, *tol, seed);
            let mut table = Table::new("validate", &["condition", "status", "worst_violation", "samples"]);
            let mut report = Vec::new();
            for o in &r.outcomes {
                let status = match o.status {
                    Status::Pass => "pass",
                    Status::SampledPass => "sampled_pass",
                    Status::Fail => "fail",
                };
                table.push(vec![o.condition.label().into(), status.into(), o.worst_violation.into(), o.samples.into()]);
                report.push(format!("({}) {status}: {}", o.condition.label(), o.detail));
            }
            report.push(if r.passed() { "all conditions pass".into() } else { "some conditions FAIL".into() });
            Ok(Outcome {
                tables: vec![table],
                results: json!({
                    "passed": r.passed(),
                    "outcomes": r.outcomes,
                    "drift_wall_bound": json_number(r.drift_wall_bound),
                    "p_star": json_number(r.p_star),
                    "l_k": r.l_k,
                }),
                report,
                passed: r.passed(),
            })
        }
    }
}

fn simulate(model: &ModelSpec, cfg: &SchemeConfig, paths: usize, seed: u64, dump: bool) -> Result<Outcome, CliError> {
    let results: Vec<dunkl_core::Result<PathResult>> = (0..paths as u64)
        .into_par_iter()
        .map(|id| {
            let driver = BrownianDriver::generate(model.noise_dim(), cfg.steps, model.horizon(), seed, id)?;
            PathSimulator::new(model, cfg)?.run(&driver).map_err(|e| dunkl_core::Error::Path {
                path_id: id,
                source: Box::new(e),
            })
        })
        .collect();
    let results = results.into_iter().collect::<dunkl_core::Result<Vec<_>>>()?;

    let d = model.dim();
    let coords: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    let mut header = vec!["path_id", "left_chamber", "first_violation"];
    header.extend(coords.iter().map(String::as_str));
    let mut terminal = Table::new("terminal", &header);
    let mut sums = vec![0.0; d];
    let mut exits = 0usize;
    for (id, path) in results.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            id.into(),
            path.left_chamber().into(),
            path.first_violation.map_or(Cell::Empty, Cell::from),
        ];
        row.extend(path.final_state().iter().map(|v| Cell::from(*v)));
        terminal.push(row);
        exits += path.left_chamber() as usize;
        for (s, v) in sums.iter_mut().zip(path.final_state()) {
            *s += v;
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s / paths as f64).collect();
    let mut tables = vec![terminal];
    if dump {
        let mut header = vec!["path_id", "step", "t"];
        header.extend(coords.iter().map(String::as_str));
        header.push("in_chamber");
        let mut table = Table::new("paths", &header);
        for (id, path) in results.iter().enumerate() {
            for l in 0..=path.grid.steps() {
                let mut row: Vec<Cell> = vec![id.into(), l.into(), path.grid.time(l).into()];
                row.extend(path.state(l).iter().map(|v| Cell::from(*v)));
                row.push(path.in_chamber[l].into());
                table.push(row);
            }
        }
        tables.push(table);
    }
    Ok(Outcome {
        tables,
        results: json!({ "paths": paths, "steps": cfg.steps, "exits": exits, "mean_terminal_state": mean }),
        report: vec![
            format!("simulated {paths} paths of {} steps", cfg.steps),
            format!("paths that left the chamber: {exits}"),
            format!("mean terminal state: {mean:?}"),
        ],
        passed: true,
    })
}

/// Runs the experiment and writes `<table>.csv`, `summary.json` and, last,
/// `manifest.json` into the output directory.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, CliError> {
    let started = unix_ms();
    let outcome = execute(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut files = Vec::new();
    for table in &outcome.tables {
        let text = table.render();
        let path = dir.join(table.file_name());
        write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;
        let lines = text.lines().count();
        files.push(FileEntry {
            file: table.file_name(),
            lines,
            rows: lines - 1,
        });
    }

    let summary = json!({
        "experiment": cfg.plan.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "l_k": cfg.model.l_k(),
        "p_star": json_number(cfg.model.p_star()),
        "passed": outcome.passed,
        "results": outcome.results,
        "config": cfg.source,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    let path = dir.join("summary.json");
    write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;
    files.push(FileEntry {
        file: "summary.json".into(),
        lines: text.lines().count(),
        rows: 0,
    });

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.plan.name().into(),
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        config: cfg.source.clone(),
        files: files.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = dir.join("manifest.json");
    write_atomic(&path, text.as_bytes()).map_err(io_err(&path))?;

    Ok(RunSummary {
        output_dir: dir.clone(),
        files,
        report: outcome.report,
        passed: outcome.passed,
    })
}

/// Derived quantities of the plan, without simulating.
pub fn describe(cfg: &ExperimentConfig) -> String {
    let model = &cfg.model;
    let rs = model.roots();
    let mut out = String::new();
    let _ = writeln!(out, "experiment: {}", cfg.plan.name());
    let _ = writeln!(
        out,
        "root system: dimension {}, {} positive roots, {} orbits",
        rs.dim(),
        rs.len(),
        rs.orbit_count()
    );
    let _ = writeln!(out, "horizon T = {}", model.horizon());
    let _ = writeln!(out, "L_k = {}", model.l_k());
    let _ = writeln!(out, "p* = {}", model.p_star());
    let variant = match cfg.scheme.variant {
        Variant::Exact => "exact".to_string(),
        Variant::Truncated => format!("truncated, c = {}", cfg.scheme.truncation),
    };
    let _ = writeln!(out, "scheme: {variant}, theta = {}", cfg.scheme.theta);
    let _ = writeln!(out, "seed: {}", cfg.seed);
    for n in cfg.plan.step_counts() {
        let dt = model.horizon() / n as f64;
        let _ = match cfg.scheme.variant {
            Variant::Exact => writeln!(out, "n = {n}: dt = {dt}"),
            Variant::Truncated => writeln!(
                out,
                "n = {n}: dt = {dt}, eps_n = {}",
                truncation_level(cfg.scheme.truncation, model.l_k(), dt)
            ),
        };
    }
    for variant in [Variant::Exact, Variant::Truncated] {
        for w in regime_warnings(model, variant) {
            let _ = writeln!(out, "warning: {w}");
        }
    }
    let _ = writeln!(out, "output directory: {}", cfg.output_dir.display());
    out
}
