//! Experiment files: JSON with four sections.
//!
//! ```json
//! {
//!   "model": {
//!     "roots": { "family": "A", "dim": 2 },
//!     "horizon": 1.0,
//!     "initial": [1.0, -1.0],
//!     "diffusion": { "form": "scalar", "value": 1.0 },
//!     "drift": { "form": "zero" },
//!     "multiplicity": [4.0]
//!   },
//!   "scheme": { "variant": "exact", "theta": 0.0 },
//!   "experiment": { "kind": "convergence" },
//!   "run": { "paths": 10000, "n_list": [16, 32, 64], "n_ref": 8192, "seed": 1 }
//! }
//! ```
//!
//! Parsing never stops at the first problem: unknown keys, type errors in
//! independent sections and semantic errors are all collected.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::Value;

use dunkl_core::implicit_step::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use dunkl_core::model::{Diffusion, Drift, ModelSpec, TimeFn};
use dunkl_core::root_system::RootSystem;
use dunkl_core::scheme::{SchemeConfig, Variant};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "family")]
pub enum RootsSection {
    #[serde(rename = "A")]
    TypeA { dim: usize },
    #[serde(rename = "B")]
    TypeB { dim: usize },
    #[serde(rename = "half_line")]
    HalfLine,
    #[serde(rename = "sum")]
    Sum { parts: Vec<RootsSection> },
    #[serde(rename = "custom")]
    Custom {
        dim: usize,
        vectors: Vec<Vec<f64>>,
        orbits: Vec<usize>,
    },
}

impl RootsSection {
    fn build(&self) -> dunkl_core::Result<RootSystem> {
        match self {
            RootsSection::TypeA { dim } => RootSystem::type_a(*dim),
            RootsSection::TypeB { dim } => RootSystem::type_b(*dim),
            RootsSection::HalfLine => Ok(RootSystem::half_line()),
            RootsSection::Sum { parts } => {
                let mut built = parts.iter().map(RootsSection::build);
                let first = built.next().ok_or_else(|| {
                    dunkl_core::Error::InvalidModel("a direct sum needs at least one part".into())
                })??;
                built.try_fold(first, |acc, next| Ok(RootSystem::direct_sum(&acc, &next?)))
            }
            RootsSection::Custom { dim, vectors, orbits } => RootSystem::new(*dim, vectors.clone(), orbits.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ModelSection {
    pub roots: RootsSection,
    pub horizon: f64,
    pub initial: Vec<f64>,
    pub diffusion: Diffusion,
    #[serde(default = "zero_drift")]
    pub drift: Drift,
    pub multiplicity: Vec<TimeFn>,
}

fn zero_drift() -> Drift {
    Drift::Zero
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SchemeSection {
    pub variant: Variant,
    #[serde(default)]
    pub theta: f64,
    /// Truncation constant, required for the truncated variant.
    pub c: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSection {
    Simulate {
        #[serde(default)]
        dump_paths: bool,
    },
    Convergence,
    Moments {
        p: f64,
        #[serde(default)]
        pathwise_sup: bool,
    },
    Increments {
        /// Lags in grid steps.
        lags: Vec<usize>,
    },
    ChamberExit,
    CirCheck,
    Validate {
        samples: Option<usize>,
        tol: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RunSection {
    pub paths: Option<usize>,
    pub n: Option<usize>,
    pub n_list: Option<Vec<usize>>,
    pub n_ref: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 or absent uses every core.
    pub threads: Option<usize>,
    /// Simulate even when a standing assumption fails its check.
    #[serde(default)]
    pub override_assumptions: bool,
}

/// What to run, with every parameter resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Simulate {
        n: usize,
        paths: usize,
        dump_paths: bool,
    },
    Convergence {
        n_list: Vec<usize>,
        n_ref: usize,
        paths: usize,
    },
    Moments {
        n: usize,
        paths: usize,
        p: f64,
        pathwise_sup: bool,
    },
    Increments {
        n: usize,
        paths: usize,
        lags: Vec<usize>,
    },
    ChamberExit {
        n_list: Vec<usize>,
        paths: usize,
    },
    CirCheck {
        n: usize,
        paths: usize,
        sigma0: f64,
        lambda0: f64,
        k0: f64,
        xi: f64,
    },
    Validate {
        samples: usize,
        tol: f64,
    },
}

impl Plan {
    pub fn name(&self) -> &'static str {
        match self {
            Plan::Simulate { .. } => "simulate",
            Plan::Convergence { .. } => "convergence",
            Plan::Moments { .. } => "moments",
            Plan::Increments { .. } => "increments",
            Plan::ChamberExit { .. } => "chamber-exit",
            Plan::CirCheck { .. } => "cir-check",
            Plan::Validate { .. } => "validate",
        }
    }

    /// Every step count the plan simulates on.
    pub fn step_counts(&self) -> Vec<usize> {
        match self {
            Plan::Simulate { n, .. }
            | Plan::Moments { n, .. }
            | Plan::Increments { n, .. }
            | Plan::CirCheck { n, .. } => vec![*n],
            Plan::Convergence { n_list, n_ref, .. } => {
                let mut v = n_list.clone();
                if !v.contains(n_ref) {
                    v.push(*n_ref);
                }
                v
            }
            Plan::ChamberExit { n_list, .. } => n_list.clone(),
            Plan::Validate { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Scheme template; the step count is set per run.
    pub scheme: SchemeConfig,
    pub plan: Plan,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub override_assumptions: bool,
    /// The parsed file, echoed into the outputs.
    pub source: Value,
}

const SECTIONS: [&str; 4] = ["model", "scheme", "experiment", "run"];
const DEFAULT_OUTPUT_DIR: &str = "dunkl-output";
const DEFAULT_VALIDATE_SAMPLES: usize = 10_000;
const DEFAULT_VALIDATE_TOL: f64 = 1e-10;

fn section<T: DeserializeOwned>(root: &Value, name: &str, errors: &mut Vec<String>) -> Option<T> {
    let Some(value) = root.get(name) else {
        errors.push(format!("missing section `{name}`"));
        return None;
    };
    let mut unknown = Vec::new();
    let parsed = serde_ignored::deserialize(value.clone(), |path| unknown.push(path.to_string()));
    for key in unknown {
        errors.push(format!("unknown key `{name}.{key}`"));
    }
    match parsed {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(format!("section `{name}`: {e}"));
            None
        }
    }
}

fn require<T: Copy>(value: Option<T>, key: &str, plan: &str, errors: &mut Vec<String>) -> Option<T> {
    if value.is_none() {
        errors.push(format!("`run.{key}` is required for the {plan} experiment"));
    }
    value
}

fn check_positive(value: Option<usize>, key: &str, errors: &mut Vec<String>) {
    if value == Some(0) {
        errors.push(format!("`run.{key}` must be positive"));
    }
}

/// Constant Bessel coefficients `(sigma0, lambda0, k0, xi)`, if the model has that form.
fn bessel_constants(model: &ModelSpec) -> Option<(f64, f64, f64, f64)> {
    let rs = model.roots();
    if rs.dim() != 1 || rs.len() != 1 || rs.roots()[0].vector() != [1.0] {
        return None;
    }
    let sigma0 = match model.diffusion() {
        Diffusion::Scalar {
            value: TimeFn::Constant(s),
        } => *s,
        _ => return None,
    };
    let lambda0 = match model.drift() {
        Drift::Zero => 0.0,
        Drift::Linear {
            lambda: TimeFn::Constant(l),
        } => *l,
        _ => return None,
    };
    let k0 = match model.multiplicity() {
        [TimeFn::Constant(k)] => *k,
        _ => return None,
    };
    Some((sigma0, lambda0, k0, model.initial()[0]))
}

/// Parses and validates an experiment file. `output_override` (the
/// `DUNKL_OUTPUT_DIR` variable) replaces `run.output_dir`.
pub fn parse_config(text: &str, output_override: Option<PathBuf>) -> Result<ExperimentConfig, Vec<String>> {
    let root: Value = serde_json::from_str(text).map_err(|e| vec![format!("malformed JSON: {e}")])?;
    let Some(object) = root.as_object() else {
        return Err(vec!["the configuration must be a JSON object".into()]);
    };
    let mut errors = Vec::new();
    for key in object.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            errors.push(format!("unknown key `{key}`"));
        }
    }
    let model: Option<ModelSection> = section(&root, "model", &mut errors);
    let scheme: Option<SchemeSection> = section(&root, "scheme", &mut errors);
    let experiment: Option<ExperimentSection> = section(&root, "experiment", &mut errors);
    let run: Option<RunSection> = section(&root, "run", &mut errors);

    let model = model.and_then(|m| {
        let built = m.roots.build().and_then(|rs| {
            ModelSpec::new(rs, m.horizon, m.initial, m.diffusion, m.drift, m.multiplicity)
        });
        built.map_err(|e| errors.push(format!("model: {e}"))).ok()
    });

    let scheme = scheme.and_then(|s| {
        let mut cfg = match s.variant {
            Variant::Exact => SchemeConfig::exact(s.theta, 1),
            Variant::Truncated => match s.c {
                Some(c) => SchemeConfig::truncated(s.theta, 1, c),
                None => {
                    errors.push("`scheme.c` is required for the truncated variant".into());
                    return None;
                }
            },
        };
        cfg.tol = s.tol.unwrap_or(DEFAULT_TOL);
        cfg.max_iter = s.max_iter.unwrap_or(DEFAULT_MAX_ITER);
        cfg.validate().map_err(|e| errors.push(format!("scheme: {e}"))).ok()?;
        Some(cfg)
    });

    let seed = run.as_ref().and_then(|r| {
        if r.seed.is_none() {
            errors.push("`run.seed` is required".into());
        }
        r.seed
    });

    let plan = match (&experiment, &run) {
        (Some(exp), Some(run)) => resolve_plan(exp, run, model.as_ref(), scheme.as_ref(), &mut errors),
        _ => None,
    };

    match (model, scheme, plan, seed, run) {
        (Some(model), Some(scheme), Some(plan), Some(seed), Some(run)) if errors.is_empty() => Ok(ExperimentConfig {
            model,
            scheme,
            plan,
            seed,
            output_dir: output_override
                .or(run.output_dir)
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            threads: run.threads,
            override_assumptions: run.override_assumptions,
            source: root,
        }),
        _ => Err(errors),
    }
}

fn resolve_plan(
    exp: &ExperimentSection,
    run: &RunSection,
    model: Option<&ModelSpec>,
    scheme: Option<&SchemeConfig>,
    errors: &mut Vec<String>,
) -> Option<Plan> {
    let before = errors.len();
    check_positive(run.paths, "paths", errors);
    check_positive(run.n, "n", errors);
    check_positive(run.n_ref, "n_ref", errors);
    if let Some(list) = &run.n_list {
        if list.is_empty() || list.contains(&0) {
            errors.push("`run.n_list` must be a non-empty list of positive step counts".into());
        }
    }
    let name = match exp {
        ExperimentSection::Simulate { .. } => "simulate",
        ExperimentSection::Convergence => "convergence",
        ExperimentSection::Moments { .. } => "moments",
        ExperimentSection::Increments { .. } => "increments",
        ExperimentSection::ChamberExit => "chamber-exit",
        ExperimentSection::CirCheck => "cir-check",
        ExperimentSection::Validate { .. } => "validate",
    };
    let variant = scheme.map(|s| s.variant);

    let plan = match exp {
        ExperimentSection::Simulate { dump_paths } => {
            let n = require(run.n, "n", name, errors);
            let paths = require(run.paths, "paths", name, errors);
            Some(Plan::Simulate {
                n: n?,
                paths: paths?,
                dump_paths: *dump_paths,
            })
        }
        ExperimentSection::Convergence => {
            let list = run.n_list.clone();
            if list.is_none() {
                errors.push(format!("`run.n_list` is required for the {name} experiment"));
            }
            let n_ref = require(run.n_ref, "n_ref", name, errors);
            let paths = require(run.paths, "paths", name, errors);
            if let Some(p) = paths {
                if p < 100 {
                    errors.push(format!("`run.paths` must be at least 100 for convergence, got {p}"));
                }
            }
            if let (Some(list), Some(n_ref)) = (&list, n_ref) {
                for &n in list {
                    if n == 0 || n_ref % n != 0 || !(n_ref / n).is_power_of_two() {
                        errors.push(format!("n = {n} does not divide n_ref = {n_ref} by a power of two"));
                    }
                }
            }
            Some(Plan::Convergence {
                n_list: list?,
                n_ref: n_ref?,
                paths: paths?,
            })
        }
        ExperimentSection::Moments { p, pathwise_sup } => {
            if !(*p >= 0.0 && p.is_finite()) {
                errors.push(format!("`experiment.p` must be non-negative, got {p}"));
            }
            if variant == Some(Variant::Truncated) {
                errors.push("negative moments are estimated with the exact variant only".into());
            }
            let n = require(run.n, "n", name, errors);
            let paths = require(run.paths, "paths", name, errors);
            Some(Plan::Moments {
                n: n?,
                paths: paths?,
                p: *p,
                pathwise_sup: *pathwise_sup,
            })
        }
        ExperimentSection::Increments { lags } => {
            let n = require(run.n, "n", name, errors);
            let paths = require(run.paths, "paths", name, errors);
            if lags.is_empty() {
                errors.push("`experiment.lags` must not be empty".into());
            }
            if let Some(n) = n {
                for &j in lags.iter().filter(|&&j| j > n) {
                    errors.push(format!("lag of {j} steps exceeds the {n}-step grid"));
                }
            }
            Some(Plan::Increments {
                n: n?,
                paths: paths?,
                lags: lags.clone(),
            })
        }
        ExperimentSection::ChamberExit => {
            let list = run.n_list.clone();
            if list.is_none() {
                errors.push(format!("`run.n_list` is required for the {name} experiment"));
            }
            if let Some(list) = &list {
                let finest = list.iter().copied().max().unwrap_or(0);
                for &n in list.iter().filter(|&&n| n == 0 || finest % n != 0) {
                    errors.push(format!("n = {n} does not divide the finest grid n = {finest}"));
                }
            }
            let paths = require(run.paths, "paths", name, errors);
            Some(Plan::ChamberExit {
                n_list: list?,
                paths: paths?,
            })
        }
        ExperimentSection::CirCheck => {
            let n = require(run.n, "n", name, errors);
            let paths = require(run.paths, "paths", name, errors);
            if variant == Some(Variant::Truncated) {
                errors.push("the cir-check experiment uses the exact variant".into());
            }
            let constants = model.and_then(|m| {
                let c = bessel_constants(m);
                if c.is_none() {
                    errors.push(
                        "cir-check needs a half-line model with constant scalar noise, \
                         zero or constant linear drift and constant multiplicity"
                            .into(),
                    );
                }
                c
            });
            let (sigma0, lambda0, k0, xi) = constants?;
            Some(Plan::CirCheck {
                n: n?,
                paths: paths?,
                sigma0,
                lambda0,
                k0,
                xi,
            })
        }
        ExperimentSection::Validate { samples, tol } => {
            let samples = samples.unwrap_or(DEFAULT_VALIDATE_SAMPLES);
            let tol = tol.unwrap_or(DEFAULT_VALIDATE_TOL);
            if samples == 0 {
                errors.push("`experiment.samples` must be positive".into());
            }
            if !(tol > 0.0) {
                errors.push(format!("`experiment.tol` must be positive, got {tol}"));
            }
            Some(Plan::Validate { samples, tol })
        }
    };
    if errors.len() > before {
        None
    } else {
        plan
    }
}
