//! Monte Carlo estimators over many independent paths.
//!
//! Every estimator is a pure function of its inputs and the master seed. Paths
//! are simulated in parallel but reduced over a fixed binary tree of path-id
//! ranges (leaves of [`LEAF_PATHS`] paths summed in id order, internal nodes
//! merged with the pairwise mean/variance update), so the floating-point result
//! does not depend on how many threads ran it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{preset_bessel, ModelSpec, TimeFn};
use crate::scheme::{BrownianDriver, PathResult, PathSimulator, SchemeConfig, Variant};

/// Paths per leaf of the reduction tree.
pub const LEAF_PATHS: usize = 32;

/// Two-sided 95% normal quantile used for confidence intervals.
pub const Z_95: f64 = 1.96;

/// Minimum number of observed exits for a grid size to enter the decay fit.
pub const MIN_EXITS_FOR_FIT: u64 = 5;

const EXACT_P_STAR: f64 = 6.0;
const TRUNCATED_P_STAR: f64 = 8.0;

/// Running mean and sum of squared deviations for a vector of observables.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn push(&mut self, obs: &[f64]) {
        assert_eq!(obs.len(), self.mean.len(), "observation width");
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), x) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    /// Combines two disjoint samples.
    pub fn merge(mut self, other: &RunningStats) -> Self {
        if other.count == 0 {
            return self;
        }
        if self.count == 0 {
            return other.clone();
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        self
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Unbiased sample variance of observable `i`; 0 for fewer than two samples.
    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2[i] / (self.count - 1) as f64).max(0.0)
    }

    /// Standard error of the mean of observable `i`.
    pub fn std_error(&self, i: usize) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.variance(i) / self.count as f64).sqrt()
    }
}

/// Runs `observe(state, path_id, out)` for every path id in `0..paths` and
/// reduces the `width`-vectors it writes. `init` builds per-leaf scratch
/// state. On failure the error of the lowest failing path id is returned,
/// wrapped with that id.
pub fn path_statistics<S, I, F>(paths: usize, width: usize, init: &I, observe: &F) -> Result<RunningStats>
where
    I: Fn() -> Result<S> + Sync,
    F: Fn(&mut S, u64, &mut [f64]) -> Result<()> + Sync,
{
    reduce_range(0, paths, width, init, observe)
}

fn reduce_range<S, I, F>(lo: usize, hi: usize, width: usize, init: &I, observe: &F) -> Result<RunningStats>
where
    I: Fn() -> Result<S> + Sync,
    F: Fn(&mut S, u64, &mut [f64]) -> Result<()> + Sync,
{
    if hi - lo <= LEAF_PATHS {
        let mut stats = RunningStats::new(width);
        if hi == lo {
            return Ok(stats);
        }
        let mut state = init()?;
        let mut buf = vec![0.0; width];
        for id in lo..hi {
            let id = id as u64;
            observe(&mut state, id, &mut buf).map_err(|e| e.on_path(id))?;
            stats.push(&buf);
        }
        return Ok(stats);
    }
    let mid = lo + (hi - lo) / 2;
    let (left, right) = rayon::join(
        || reduce_range(lo, mid, width, init, observe),
        || reduce_range(mid, hi, width, init, observe),
    );
    // Left first so the lowest failing path wins regardless of timing.
    let left = left?;
    Ok(left.merge(&right?))
}

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None` or 0. Results never depend on the choice.
pub fn with_threads<T, F>(threads: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match threads {
        None | Some(0) => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Warnings for a model outside the regime in which the convergence
/// guarantees of `variant` hold.
pub fn regime_warnings(model: &ModelSpec, variant: Variant) -> Vec<String> {
    let p_star = model.p_star();
    let (threshold, name) = match variant {
        Variant::Exact => (EXACT_P_STAR, "exact implicit"),
        Variant::Truncated => (TRUNCATED_P_STAR, "truncated"),
    };
    if p_star > threshold {
        Vec::new()
    } else {
        vec![format!(
            "p* = {p_star} <= {threshold}: the {name} scheme's strong-order guarantee requires p* > {threshold}"
        )]
    }
}

/// `sup_l |a(t_l) - b(t_l)|^2` over the times of the coarser path, which must nest in the finer one.
fn sup_sq_distance(a: &PathResult, b: &PathResult) -> f64 {
    let (coarse, fine) = if a.grid.steps() <= b.grid.steps() { (a, b) } else { (b, a) };
    let ratio = fine.grid.steps() / coarse.grid.steps();
    (1..=coarse.grid.steps())
        .map(|l| {
            coarse
                .state(l)
                .iter()
                .zip(fine.state(l * ratio))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

fn check_nested(coarse: usize, fine: usize) -> Result<()> {
    if coarse == 0 || fine % coarse != 0 || !(fine / coarse).is_power_of_two() {
        return Err(Error::Grid(format!(
            "{coarse} steps do not nest in {fine} steps by a power of two"
        )));
    }
    Ok(())
}

/// Root-mean-square sup error against a reference run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    pub variant: Variant,
    pub theta: f64,
    pub steps: Vec<usize>,
    /// `E[sup_l |X_ref(t_l) - X_n(t_l)|^2]^(1/2)`.
    pub rms_sup_error: Vec<f64>,
    /// Standard error of `rms_sup_error` (delta method on the mean square).
    pub std_error: Vec<f64>,
    pub paths: usize,
    pub reference_steps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderFit {
    /// `error ~ n^slope`.
    pub slope: f64,
    pub intercept: f64,
    /// Two standard errors of the slope.
    pub half_width: f64,
    pub points: usize,
}

/// Ordinary least squares of `log2 y` on `log2 x` over entries with `x, y > 0`.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<OrderFit> {
    if x.len() != y.len() {
        return Err(Error::Fit(format!("{} abscissae for {} values", x.len(), y.len())));
    }
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.log2(), b.log2()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 positive points, have {}", pts.len())));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - intercept - slope * p.0;
            r * r
        })
        .sum();
    let se = (rss / (m - 2.0) / sxx).sqrt();
    Ok(OrderFit {
        slope,
        intercept,
        half_width: 2.0 * se,
        points: pts.len(),
    })
}

/// Log-log fit of an error curve; the `n_ref` entry (error 0) drops out.
pub fn fit_order(curve: &ErrorCurve) -> Result<OrderFit> {
    let n: Vec<f64> = curve.steps.iter().map(|&n| n as f64).collect();
    fit_loglog(&n, &curve.rms_sup_error)
}

/// Strong error of the scheme in `template` (variant, theta, `c`, tolerances)
/// at each `n` in `steps`, against the same scheme at `reference_steps` on
/// the nested driver of each path.
pub fn strong_error(
    model: &ModelSpec,
    template: &SchemeConfig,
    steps: &[usize],
    reference_steps: usize,
    paths: usize,
    master_seed: u64,
) -> Result<ErrorCurve> {
    if paths < 100 {
        return Err(Error::InvalidParameter(format!("strong error needs at least 100 paths, got {paths}")));
    }
    if steps.is_empty() {
        return Err(Error::Grid("empty list of step counts".into()));
    }
    for &n in steps {
        check_nested(n, reference_steps)?;
    }
    let reference_cfg = template.with_steps(reference_steps);
    reference_cfg.validate()?;
    let configs: Vec<SchemeConfig> = steps.iter().map(|&n| template.with_steps(n)).collect();

    let init = || -> Result<(PathSimulator, Vec<PathSimulator>)> {
        Ok((
            PathSimulator::new(model, &reference_cfg)?,
            configs
                .iter()
                .map(|c| PathSimulator::new(model, c))
                .collect::<Result<_>>()?,
        ))
    };
    let observe = |(reference, coarse): &mut (PathSimulator, Vec<PathSimulator>), id: u64, out: &mut [f64]| {
        let driver = BrownianDriver::generate(model.noise_dim(), reference_steps, model.horizon(), master_seed, id)?;
        let exact = reference.run(&driver)?;
        for (slot, sim) in out.iter_mut().zip(coarse.iter_mut()) {
            *slot = if sim.config().steps == reference_steps {
                0.0
            } else {
                sup_sq_distance(&sim.run(&driver)?, &exact)
            };
        }
        Ok(())
    };
    let stats = path_statistics(paths, steps.len(), &init, &observe)?;

    let mut rms = Vec::with_capacity(steps.len());
    let mut se = Vec::with_capacity(steps.len());
    for i in 0..steps.len() {
        let r = stats.mean()[i].sqrt();
        rms.push(r);
        se.push(if r > 0.0 { stats.std_error(i) / (2.0 * r) } else { 0.0 });
    }
    Ok(ErrorCurve {
        variant: template.variant,
        theta: template.theta,
        steps: steps.to_vec(),
        rms_sup_error: rms,
        std_error: se,
        paths,
        reference_steps,
        warnings: regime_warnings(model, template.variant),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEstimate {
    /// `E[sup_l |X_a(t_l) - X_b(t_l)|^2]^(1/2)` over the coarser grid.
    pub rms_sup_gap: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// RMS sup distance between two schemes driven by the same Brownian paths.
/// The coarser step count must nest in the finer by a power of two.
pub fn scheme_gap(
    model: &ModelSpec,
    a: &SchemeConfig,
    b: &SchemeConfig,
    paths: usize,
    master_seed: u64,
) -> Result<GapEstimate> {
    let fine = a.steps.max(b.steps);
    check_nested(a.steps.min(b.steps), fine)?;
    let init = || -> Result<(PathSimulator, PathSimulator)> {
        Ok((PathSimulator::new(model, a)?, PathSimulator::new(model, b)?))
    };
    let observe = |(sa, sb): &mut (PathSimulator, PathSimulator), id: u64, out: &mut [f64]| {
        let driver = BrownianDriver::generate(model.noise_dim(), fine, model.horizon(), master_seed, id)?;
        out[0] = sup_sq_distance(&sa.run(&driver)?, &sb.run(&driver)?);
        Ok(())
    };
    let stats = path_statistics(paths, 1, &init, &observe)?;
    let r = stats.mean()[0].sqrt();
    Ok(GapEstimate {
        rms_sup_gap: r,
        std_error: if r > 0.0 { stats.std_error(0) / (2.0 * r) } else { 0.0 },
        paths,
    })
}

/// Estimates of `E[<a, X(t_l)>^-p]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub p: f64,
    pub steps: usize,
    pub paths: usize,
    pub times: Vec<f64>,
    /// `estimates[i][l]` for root `i` at `t_l`.
    pub estimates: Vec<Vec<f64>>,
    pub std_errors: Vec<Vec<f64>>,
    /// `max_{i, l} estimates[i][l]`.
    pub max_estimate: f64,
    /// Per root, `E[sup_l <a, X(t_l)>^-p]` when requested.
    pub pathwise_sup: Option<Vec<f64>>,
    pub pathwise_sup_std_error: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Negative moments of the wall distances under the exact scheme.
pub fn negative_moments(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    p: f64,
    paths: usize,
    master_seed: u64,
    pathwise_sup: bool,
) -> Result<MomentReport> {
    if cfg.variant != Variant::Exact {
        return Err(Error::InvalidParameter(
            "negative moments are estimated on the chamber-preserving exact scheme only".into(),
        ));
    }
    if !(p >= 0.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("moment order must be non-negative, got {p}")));
    }
    if paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let n = cfg.steps;
    let rs = model.roots();
    let roots = rs.len();
    let grid_width = roots * (n + 1);
    let width = grid_width + if pathwise_sup { roots } else { 0 };

    let init = || PathSimulator::new(model, cfg);
    let observe = |sim: &mut PathSimulator, id: u64, out: &mut [f64]| {
        let driver = BrownianDriver::generate(model.noise_dim(), n, model.horizon(), master_seed, id)?;
        let path = sim.run(&driver)?;
        for (i, root) in rs.roots().iter().enumerate() {
            let mut sup: f64 = 0.0;
            for l in 0..=n {
                let v = root.pairing(path.state(l)).powf(-p);
                out[i * (n + 1) + l] = v;
                sup = sup.max(v);
            }
            if pathwise_sup {
                out[grid_width + i] = sup;
            }
        }
        Ok(())
    };
    let stats = path_statistics(paths, width, &init, &observe)?;

    let grid = crate::scheme::TimeGrid::new(n, model.horizon())?;
    let mut estimates = Vec::with_capacity(roots);
    let mut std_errors = Vec::with_capacity(roots);
    for i in 0..roots {
        let range = i * (n + 1)..(i + 1) * (n + 1);
        estimates.push(stats.mean()[range.clone()].to_vec());
        std_errors.push(range.map(|j| stats.std_error(j)).collect());
    }
    let max_estimate = estimates.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let (sup, sup_se) = if pathwise_sup {
        (
            Some(stats.mean()[grid_width..].to_vec()),
            Some((grid_width..width).map(|j| stats.std_error(j)).collect()),
        )
    } else {
        (None, None)
    };
    let p_star = model.p_star();
    let mut warnings = Vec::new();
    if p >= p_star {
        warnings.push(format!(
            "p = {p} >= p* = {p_star}: the moment need not be finite and the estimate may not stabilise"
        ));
    }
    if pathwise_sup && p >= p_star - 2.0 {
        warnings.push(format!(
            "p = {p} >= p* - 2 = {}: the pathwise-sup moment need not be finite",
            p_star - 2.0
        ));
    }
    Ok(MomentReport {
        p,
        steps: n,
        paths,
        times: (0..=n).map(|l| grid.time(l)).collect(),
        estimates,
        std_errors,
        max_estimate,
        pathwise_sup: sup,
        pathwise_sup_std_error: sup_se,
        warnings,
    })
}

/// Mean squared increments `E|X(t + tau) - X(t)|^2`, averaged over grid times and paths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IncrementReport {
    pub steps: usize,
    pub paths: usize,
    /// Lags in grid steps.
    pub lags: Vec<usize>,
    pub taus: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Slope of `log mean_sq` against `log tau` over positive lags, if at least three.
    pub fit: Option<OrderFit>,
}

pub fn increment_scaling(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    lags: &[usize],
    paths: usize,
    master_seed: u64,
) -> Result<IncrementReport> {
    let n = cfg.steps;
    if let Some(&bad) = lags.iter().find(|&&j| j > n) {
        return Err(Error::Grid(format!("lag of {bad} steps exceeds the {n}-step grid")));
    }
    if paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let d = model.dim();
    let init = || PathSimulator::new(model, cfg);
    let observe = |sim: &mut PathSimulator, id: u64, out: &mut [f64]| {
        let driver = BrownianDriver::generate(model.noise_dim(), n, model.horizon(), master_seed, id)?;
        let path = sim.run(&driver)?;
        for (slot, &j) in out.iter_mut().zip(lags) {
            let mut acc = 0.0;
            for l in 0..=n - j {
                for c in 0..d {
                    let diff = path.states[(l + j) * d + c] - path.states[l * d + c];
                    acc += diff * diff;
                }
            }
            *slot = acc / (n - j + 1) as f64;
        }
        Ok(())
    };
    let stats = path_statistics(paths, lags.len(), &init, &observe)?;
    let dt = model.horizon() / n as f64;
    let taus: Vec<f64> = lags.iter().map(|&j| j as f64 * dt).collect();
    let mean_sq = stats.mean().to_vec();
    let positive = taus.iter().filter(|t| **t > 0.0).count();
    Ok(IncrementReport {
        steps: n,
        paths,
        lags: lags.to_vec(),
        fit: if positive >= 3 { fit_loglog(&taus, &mean_sq).ok() } else { None },
        std_error: (0..lags.len()).map(|i| stats.std_error(i)).collect(),
        taus,
        mean_sq,
    })
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let m = trials as f64;
    let p = successes as f64 / m;
    let z2 = z * z;
    let denom = 1.0 + z2 / m;
    let center = (p + z2 / (2.0 * m)) / denom;
    let half = z / denom * (p * (1.0 - p) / m + z2 / (4.0 * m * m)).sqrt();
    let low = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// Fraction of paths that ever leave the chamber, per grid size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitReport {
    pub variant: Variant,
    pub steps: Vec<usize>,
    pub paths: usize,
    pub exits: Vec<u64>,
    pub exit_fraction: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    /// Slope of `log fraction` against `log n` over entries with enough exits.
    pub fit: Option<OrderFit>,
    pub warnings: Vec<String>,
}

/// Chamber-exit frequencies. All grid sizes share the driver generated on the
/// finest one, so each must divide the largest. For the exact variant the
/// fractions are 0 by construction and nothing is simulated.
pub fn chamber_exit(
    model: &ModelSpec,
    template: &SchemeConfig,
    steps: &[usize],
    paths: usize,
    master_seed: u64,
) -> Result<ExitReport> {
    let finest = *steps.iter().max().ok_or_else(|| Error::Grid("empty list of step counts".into()))?;
    if let Some(&bad) = steps.iter().find(|&&n| n == 0 || finest % n != 0) {
        return Err(Error::Grid(format!("{bad} steps do not divide the finest grid of {finest}")));
    }
    if paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let configs: Vec<SchemeConfig> = steps.iter().map(|&n| template.with_steps(n)).collect();
    for c in &configs {
        c.validate()?;
    }
    let exits: Vec<u64> = match template.variant {
        Variant::Exact => vec![0; steps.len()],
        Variant::Truncated => {
            let init = || configs.iter().map(|c| PathSimulator::new(model, c)).collect::<Result<Vec<_>>>();
            let observe = |sims: &mut Vec<PathSimulator>, id: u64, out: &mut [f64]| {
                let driver = BrownianDriver::generate(model.noise_dim(), finest, model.horizon(), master_seed, id)?;
                for (slot, sim) in out.iter_mut().zip(sims.iter_mut()) {
                    *slot = if sim.run(&driver)?.left_chamber() { 1.0 } else { 0.0 };
                }
                Ok(())
            };
            let stats = path_statistics(paths, steps.len(), &init, &observe)?;
            stats.mean().iter().map(|f| (f * paths as f64).round() as u64).collect()
        }
    };
    let fraction: Vec<f64> = exits.iter().map(|&e| e as f64 / paths as f64).collect();
    let (ci_low, ci_high) = exits
        .iter()
        .map(|&e| wilson_interval(e, paths as u64, Z_95))
        .unzip();
    let (fit_n, fit_f): (Vec<f64>, Vec<f64>) = steps
        .iter()
        .zip(&exits)
        .zip(&fraction)
        .filter(|((_, e), _)| **e >= MIN_EXITS_FOR_FIT)
        .map(|((n, _), f)| (*n as f64, *f))
        .unzip();
    let warnings = match template.variant {
        Variant::Truncated => regime_warnings(model, Variant::Truncated),
        Variant::Exact => Vec::new(),
    };
    Ok(ExitReport {
        variant: template.variant,
        steps: steps.to_vec(),
        paths,
        exits,
        exit_fraction: fraction,
        ci_low,
        ci_high,
        fit: fit_loglog(&fit_n, &fit_f).ok(),
        warnings,
    })
}

/// Exact mean of `Y = X^2` for the constant-coefficient Bessel model:
/// `m' = 2 k + sigma^2 + 2 lambda m`, `m(0) = xi^2`.
pub fn squared_mean_exact(sigma0: f64, lambda0: f64, k0: f64, xi: f64, t: f64) -> f64 {
    let a = 2.0 * k0 + sigma0 * sigma0;
    if lambda0 == 0.0 {
        xi * xi + a * t
    } else {
        let shift = a / (2.0 * lambda0);
        (xi * xi + shift) * (2.0 * lambda0 * t).exp() - shift
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirCheck {
    pub exact_mean: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// `(estimate - exact_mean) / std_error`; 0 when both differences vanish.
    pub z_score: f64,
    /// `0.01 * |exact_mean|`, allowance for the time-discretisation bias.
    pub bias_allowance: f64,
    /// `|estimate - exact_mean| <= 3 std_error + bias_allowance`.
    pub within: bool,
}

/// Compares the Monte Carlo mean of `X(T)^2` under the exact scheme with the
/// closed-form mean of the squared process.
#[allow(clippy::too_many_arguments)]
pub fn cir_mean_check(
    sigma0: f64,
    lambda0: f64,
    k0: f64,
    xi: f64,
    horizon: f64,
    theta: f64,
    steps: usize,
    paths: usize,
    master_seed: u64,
) -> Result<CirCheck> {
    let model = preset_bessel(
        TimeFn::Constant(sigma0),
        TimeFn::Constant(lambda0),
        TimeFn::Constant(k0),
        xi,
        horizon,
    )?;
    let cfg = SchemeConfig::exact(theta, steps);
    if paths == 0 {
        return Err(Error::InvalidParameter("need at least one path".into()));
    }
    let init = || PathSimulator::new(&model, &cfg);
    let observe = |sim: &mut PathSimulator, id: u64, out: &mut [f64]| {
        let driver = BrownianDriver::generate(1, steps, horizon, master_seed, id)?;
        let x = sim.run(&driver)?.final_state()[0];
        out[0] = x * x;
        Ok(())
    };
    let stats = path_statistics(paths, 1, &init, &observe)?;
    let exact_mean = squared_mean_exact(sigma0, lambda0, k0, xi, horizon);
    let estimate = stats.mean()[0];
    let std_error = stats.std_error(0);
    let diff = estimate - exact_mean;
    let bias_allowance = 0.01 * exact_mean.abs();
    Ok(CirCheck {
        exact_mean,
        estimate,
        std_error,
        z_score: if std_error > 0.0 { diff / std_error } else { 0.0 },
        bias_allowance,
        within: diff.abs() <= 3.0 * std_error + bias_allowance,
    })
}
