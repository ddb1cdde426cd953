//! One SDE instance: coefficients, initial point and the derived constants.
//!
//! ```text
//! dX = sigma(t, X) dB + b(t, X) dt + sum_a k(t, a) / <a, X> a dt,   X(0) = xi in W
//! ```
//!
//! Multiplicities `k` are time functions indexed by orbit of the root system.
//! Coefficients come from a small closed set of forms so that sup-norms and
//! Lipschitz constants are known exactly (or declared, for user forms).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::root_system::{dot, RootSystem};

/// Number of uniform points in the time lattice used for sup/inf over `[0, T]`.
pub const TIME_LATTICE_POINTS: usize = 1024;

/// `1 / max(eps, s)`.
pub fn g_eps(eps: f64, s: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("truncation level must be positive, got {eps}")));
    }
    Ok(1.0 / eps.max(s))
}

/// A real function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TimeFn {
    Constant(f64),
    /// `a + b * sqrt(t)`, the prototypical 1/2-Hölder profile.
    AffineSqrt { a: f64, b: f64 },
    /// Piecewise-linear interpolation of `(times[i], values[i])`, held constant
    /// outside the table.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
}

impl TimeFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            TimeFn::Constant(c) => *c,
            TimeFn::AffineSqrt { a, b } => a + b * t.max(0.0).sqrt(),
            TimeFn::Tabulated { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[last] {
                    return values[last];
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        match self {
            TimeFn::Constant(c) if !c.is_finite() => {
                Err(Error::InvalidModel(format!("non-finite constant {c}")))
            }
            TimeFn::AffineSqrt { a, b } if !(a.is_finite() && b.is_finite()) => {
                Err(Error::InvalidModel("non-finite affine-sqrt coefficients".into()))
            }
            TimeFn::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::InvalidModel(
                        "tabulated function needs equal, non-zero numbers of times and values".into(),
                    ));
                }
                if times.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("tabulated function has non-finite entries".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidModel("tabulated times must be strictly increasing".into()));
                }
                if times[0] > 0.0 || times[times.len() - 1] < horizon {
                    return Err(Error::InvalidModel(format!(
                        "tabulated times must cover [0, {horizon}]"
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Table nodes inside `[0, horizon]`; empty for the closed forms.
    pub fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        match self {
            TimeFn::Tabulated { times, .. } => times
                .iter()
                .copied()
                .filter(|&t| (0.0..=horizon).contains(&t))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// `sup |f|` on `[0, horizon]`. Exact: the closed forms are monotone and a
    /// piecewise-linear function attains its extrema at nodes or endpoints.
    pub fn sup_abs(&self, horizon: f64) -> f64 {
        self.extreme_candidates(horizon)
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }

    /// `inf f` on `[0, horizon]`, exact for the same reasons as [`TimeFn::sup_abs`].
    pub fn min(&self, horizon: f64) -> f64 {
        self.extreme_candidates(horizon)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    fn extreme_candidates(&self, horizon: f64) -> Vec<f64> {
        let mut points = self.breakpoints(horizon);
        points.push(0.0);
        points.push(horizon);
        points.into_iter().map(|t| self.eval(t)).collect()
    }
}

fn frobenius(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

fn is_square_diagonal(rows: &[Vec<f64>]) -> bool {
    rows.iter().enumerate().all(|(i, row)| {
        row.len() == rows.len() && row.iter().enumerate().all(|(j, v)| i == j || *v == 0.0)
    })
}

/// Diffusion coefficient `sigma(t, x)`, a `d x r` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum Diffusion {
    /// `s(t) * I_d` with `r = d`.
    Scalar { value: TimeFn },
    /// `diag(s_1(t), ..., s_d(t))` with `r = d`.
    Diagonal { values: Vec<TimeFn> },
    /// Constant `d x r` matrix, row-major.
    Matrix { rows: Vec<Vec<f64>> },
    /// `sigma_ij(x) = base_ij + gain_ij * clamp(x_i, -clip, clip)`: linear in
    /// `x` inside the band, bounded and globally Lipschitz.
    ClampedLinear {
        base: Vec<Vec<f64>>,
        gain: Vec<Vec<f64>>,
        clip: f64,
    },
}

impl Diffusion {
    pub fn identity() -> Self {
        Diffusion::Scalar {
            value: TimeFn::Constant(1.0),
        }
    }

    /// Brownian dimension `r` for state dimension `d`.
    pub fn noise_dim(&self, d: usize) -> usize {
        match self {
            Diffusion::Scalar { .. } | Diffusion::Diagonal { .. } => d,
            Diffusion::Matrix { rows } => rows.first().map_or(0, Vec::len),
            Diffusion::ClampedLinear { base, .. } => base.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self, d: usize, horizon: f64) -> Result<()> {
        let check_rows = |rows: &[Vec<f64>], what: &str| -> Result<()> {
            let r = rows.first().map_or(0, Vec::len);
            if rows.len() != d || r == 0 || rows.iter().any(|row| row.len() != r) {
                return Err(Error::InvalidModel(format!(
                    "{what} must be a {d} x r matrix with r >= 1"
                )));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("{what} has non-finite entries")));
            }
            Ok(())
        };
        match self {
            Diffusion::Scalar { value } => value.validate(horizon),
            Diffusion::Diagonal { values } => {
                if values.len() != d {
                    return Err(Error::InvalidModel(format!(
                        "diagonal diffusion needs {d} entries, got {}",
                        values.len()
                    )));
                }
                values.iter().try_for_each(|v| v.validate(horizon))
            }
            Diffusion::Matrix { rows } => check_rows(rows, "diffusion matrix"),
            Diffusion::ClampedLinear { base, gain, clip } => {
                check_rows(base, "clamped-linear base")?;
                check_rows(gain, "clamped-linear gain")?;
                if base[0].len() != gain[0].len() {
                    return Err(Error::InvalidModel("base and gain shapes differ".into()));
                }
                if !(clip.is_finite() && *clip > 0.0) {
                    return Err(Error::InvalidModel("clip must be positive and finite".into()));
                }
                Ok(())
            }
        }
    }

    /// The matrix `sigma(t, x)`.
    pub fn matrix(&self, t: f64, x: &[f64]) -> Vec<Vec<f64>> {
        let d = x.len();
        match self {
            Diffusion::Scalar { value } => {
                let s = value.eval(t);
                (0..d)
                    .map(|i| (0..d).map(|j| if i == j { s } else { 0.0 }).collect())
                    .collect()
            }
            Diffusion::Diagonal { values } => (0..d)
                .map(|i| {
                    (0..d)
                        .map(|j| if i == j { values[i].eval(t) } else { 0.0 })
                        .collect()
                })
                .collect(),
            Diffusion::Matrix { rows } => rows.clone(),
            Diffusion::ClampedLinear { base, gain, clip } => base
                .iter()
                .zip(gain)
                .zip(x)
                .map(|((b_row, g_row), xi)| {
                    let s = xi.clamp(-clip, *clip);
                    b_row.iter().zip(g_row).map(|(b, g)| b + g * s).collect()
                })
                .collect(),
        }
    }

    /// `out += sigma(t, x) * dw`.
    pub fn add_noise(&self, t: f64, x: &[f64], dw: &[f64], out: &mut [f64]) {
        match self {
            Diffusion::Scalar { value } => {
                let s = value.eval(t);
                for (o, w) in out.iter_mut().zip(dw) {
                    *o += s * w;
                }
            }
            Diffusion::Diagonal { values } => {
                for ((o, w), v) in out.iter_mut().zip(dw).zip(values) {
                    *o += v.eval(t) * w;
                }
            }
            Diffusion::Matrix { rows } => {
                for (o, row) in out.iter_mut().zip(rows) {
                    *o += dot(row, dw);
                }
            }
            Diffusion::ClampedLinear { base, gain, clip } => {
                for (i, o) in out.iter_mut().enumerate() {
                    let s = x[i].clamp(-clip, *clip);
                    *o += base[i]
                        .iter()
                        .zip(&gain[i])
                        .zip(dw)
                        .map(|((b, g), w)| (b + g * s) * w)
                        .sum::<f64>();
                }
            }
        }
    }

    fn is_diagonal_form(&self) -> bool {
        match self {
            Diffusion::Scalar { .. } | Diffusion::Diagonal { .. } => true,
            Diffusion::Matrix { rows } => is_square_diagonal(rows),
            Diffusion::ClampedLinear { base, gain, .. } => {
                is_square_diagonal(base) && is_square_diagonal(gain)
            }
        }
    }

    /// `sigma_bar(t, x)`: the largest diagonal magnitude when `sigma` is square
    /// and diagonal, the Frobenius norm otherwise.
    pub fn sigma_bar(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Diffusion::Scalar { value } => value.eval(t).abs(),
            Diffusion::Diagonal { values } => {
                values.iter().map(|v| v.eval(t).abs()).fold(0.0, f64::max)
            }
            _ => {
                let m = self.matrix(t, x);
                if self.is_diagonal_form() {
                    (0..m.len()).map(|i| m[i][i].abs()).fold(0.0, f64::max)
                } else {
                    frobenius(&m)
                }
            }
        }
    }

    /// `sup_x sigma_bar(t, x)`. Exact for every shipped form.
    pub fn sigma_bar_sup(&self, t: f64) -> f64 {
        match self {
            Diffusion::Scalar { .. } | Diffusion::Diagonal { .. } | Diffusion::Matrix { .. } => {
                self.sigma_bar(t, &[])
            }
            Diffusion::ClampedLinear { base, gain, clip } => {
                if self.is_diagonal_form() {
                    (0..base.len())
                        .map(|i| base[i][i].abs() + gain[i][i].abs() * clip)
                        .fold(0.0, f64::max)
                } else {
                    // Each row depends on its own coordinate only and the squared
                    // row norm is convex in it, so the sup sits at +-clip.
                    base.iter()
                        .zip(gain)
                        .map(|(b_row, g_row)| {
                            [-clip, *clip]
                                .iter()
                                .map(|s| {
                                    b_row
                                        .iter()
                                        .zip(g_row)
                                        .map(|(b, g)| (b + g * s).powi(2))
                                        .sum::<f64>()
                                })
                                .fold(0.0, f64::max)
                        })
                        .sum::<f64>()
                        .sqrt()
                }
            }
        }
    }

    /// Lipschitz constant in `x` (Frobenius norm), uniform in time.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Diffusion::ClampedLinear { gain, .. } => gain
                .iter()
                .map(|row| row.iter().map(|g| g * g).sum::<f64>())
                .fold(0.0, f64::max)
                .sqrt(),
            _ => 0.0,
        }
    }

    fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        match self {
            Diffusion::Scalar { value } => value.breakpoints(horizon),
            Diffusion::Diagonal { values } => {
                values.iter().flat_map(|v| v.breakpoints(horizon)).collect()
            }
            _ => Vec::new(),
        }
    }
}

/// Regular drift `b(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    Zero,
    /// `lambda(t) * x`.
    Linear { lambda: TimeFn },
    /// Constant vector.
    Constant { values: Vec<f64> },
    /// `A x + c` with a declared Lipschitz constant.
    Affine {
        matrix: Vec<Vec<f64>>,
        offset: Vec<f64>,
        lipschitz: f64,
    },
}

impl Drift {
    fn validate(&self, d: usize, horizon: f64) -> Result<()> {
        match self {
            Drift::Zero => Ok(()),
            Drift::Linear { lambda } => lambda.validate(horizon),
            Drift::Constant { values } => {
                if values.len() != d || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel(format!(
                        "constant drift needs {d} finite entries"
                    )));
                }
                Ok(())
            }
            Drift::Affine {
                matrix,
                offset,
                lipschitz,
            } => {
                if matrix.len() != d
                    || matrix.iter().any(|row| row.len() != d)
                    || offset.len() != d
                {
                    return Err(Error::InvalidModel(format!("affine drift must be {d} x {d} plus {d}")));
                }
                if matrix.iter().flatten().chain(offset).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidModel("affine drift has non-finite entries".into()));
                }
                if !(lipschitz.is_finite() && *lipschitz >= 0.0) {
                    return Err(Error::InvalidModel("declared Lipschitz constant must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// `out += scale * b(t, x)`.
    pub fn add_scaled(&self, t: f64, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Drift::Zero => {}
            Drift::Linear { lambda } => {
                let l = lambda.eval(t) * scale;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += l * xi;
                }
            }
            Drift::Constant { values } => {
                for (o, v) in out.iter_mut().zip(values) {
                    *o += scale * v;
                }
            }
            Drift::Affine { matrix, offset, .. } => {
                for ((o, row), c) in out.iter_mut().zip(matrix).zip(offset) {
                    *o += scale * (dot(row, x) + c);
                }
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.add_scaled(t, x, 1.0, &mut out);
        out
    }

    /// Lipschitz constant in `x`, uniform on `[0, horizon]`.
    pub fn lipschitz(&self, horizon: f64) -> f64 {
        match self {
            Drift::Zero | Drift::Constant { .. } => 0.0,
            Drift::Linear { lambda } => lambda.sup_abs(horizon),
            Drift::Affine { lipschitz, .. } => *lipschitz,
        }
    }

    fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        match self {
            Drift::Linear { lambda } => lambda.breakpoints(horizon),
            _ => Vec::new(),
        }
    }
}

/// `out += scale * sum_a w_a g(<a, x>) a` where `g(s) = 1/s`, or
/// `1/max(eps, s)` when `eps` is given. `weights` are per root.
pub(crate) fn add_singular_drift(
    rs: &RootSystem,
    weights: &[f64],
    x: &[f64],
    eps: Option<f64>,
    scale: f64,
    out: &mut [f64],
) {
    for (root, w) in rs.roots().iter().zip(weights) {
        let p = root.pairing(x);
        let g = match eps {
            Some(e) => 1.0 / e.max(p),
            None => 1.0 / p,
        };
        let c = scale * w * g;
        for (o, a) in out.iter_mut().zip(root.vector()) {
            *o += c * a;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSpec {
    roots: RootSystem,
    horizon: f64,
    initial: Vec<f64>,
    diffusion: Diffusion,
    drift: Drift,
    multiplicity: Vec<TimeFn>,
}

impl ModelSpec {
    /// Validates and assembles a model. `multiplicity` holds one time function
    /// per orbit of `roots`; each must be strictly positive on `[0, horizon]`.
    pub fn new(
        roots: RootSystem,
        horizon: f64,
        initial: Vec<f64>,
        diffusion: Diffusion,
        drift: Drift,
        multiplicity: Vec<TimeFn>,
    ) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidModel(format!("horizon must be positive, got {horizon}")));
        }
        let d = roots.dim();
        roots.check_dim(initial.len())?;
        let min_pairing = roots.min_pairing_unchecked(&initial);
        if !(min_pairing > 0.0) {
            return Err(Error::OutsideChamber { min_pairing });
        }
        if multiplicity.len() != roots.orbit_count() {
            return Err(Error::InvalidModel(format!(
                "need one multiplicity per orbit ({}), got {}",
                roots.orbit_count(),
                multiplicity.len()
            )));
        }
        for (orbit, k) in multiplicity.iter().enumerate() {
            k.validate(horizon)?;
            let low = k.min(horizon);
            if !(low > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "multiplicity of orbit {orbit} must be positive on [0, T] (min {low})"
                )));
            }
        }
        diffusion.validate(d, horizon)?;
        drift.validate(d, horizon)?;
        Ok(ModelSpec {
            roots,
            horizon,
            initial,
            diffusion,
            drift,
            multiplicity,
        })
    }

    pub fn roots(&self) -> &RootSystem {
        &self.roots
    }

    pub fn dim(&self) -> usize {
        self.roots.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.diffusion.noise_dim(self.dim())
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn drift(&self) -> &Drift {
        &self.drift
    }

    pub fn multiplicity(&self) -> &[TimeFn] {
        &self.multiplicity
    }

    pub fn orbit_values(&self, t: f64) -> Vec<f64> {
        self.multiplicity.iter().map(|k| k.eval(t)).collect()
    }

    /// Per-root multiplicities at time `t`.
    pub fn root_weights(&self, t: f64, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.multiplicity[self.roots.orbit_of(i)].eval(t);
        }
    }

    fn weights(&self, t: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.roots.len()];
        self.root_weights(t, &mut w);
        w
    }

    /// The singular drift `f_k(t, x) = sum_a k(t, a) / <a, x> a`; `x` must be in the chamber.
    pub fn f_k(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let min_pairing = self.roots.min_pairing(x)?;
        if !(min_pairing > 0.0) {
            return Err(Error::OutsideChamber { min_pairing });
        }
        let mut out = vec![0.0; x.len()];
        add_singular_drift(&self.roots, &self.weights(t), x, None, 1.0, &mut out);
        Ok(out)
    }

    /// The truncated drift `sum_a k(t, a) g_eps(<a, x>) a`, defined on all of R^d.
    pub fn f_k_eps(&self, t: f64, x: &[f64], eps: f64) -> Result<Vec<f64>> {
        g_eps(eps, 0.0)?;
        self.roots.check_dim(x.len())?;
        let mut out = vec![0.0; x.len()];
        add_singular_drift(&self.roots, &self.weights(t), x, Some(eps), 1.0, &mut out);
        Ok(out)
    }

    /// `L_k = sum_a sup_t |k(t, a)| |a|^2`.
    pub fn l_k(&self) -> f64 {
        self.roots
            .roots()
            .iter()
            .enumerate()
            .map(|(i, r)| self.multiplicity[self.roots.orbit_of(i)].sup_abs(self.horizon) * r.norm_sq())
            .sum()
    }

    /// `sum_a sup_t |k(t, a)|`, the bound on `<x, f_k_eps(t, x)>`.
    pub fn k_mass(&self) -> f64 {
        (0..self.roots.len())
            .map(|i| self.multiplicity[self.roots.orbit_of(i)].sup_abs(self.horizon))
            .sum()
    }

    pub fn sigma_bar(&self, t: f64, x: &[f64]) -> f64 {
        self.diffusion.sigma_bar(t, x)
    }

    /// Uniform lattice of [`TIME_LATTICE_POINTS`] points on `[0, T]` merged with
    /// all coefficient breakpoints.
    pub fn time_lattice(&self) -> Vec<f64> {
        let n = TIME_LATTICE_POINTS - 1;
        let mut ts: Vec<f64> = (0..=n).map(|i| self.horizon * i as f64 / n as f64).collect();
        ts.extend(self.multiplicity.iter().flat_map(|k| k.breakpoints(self.horizon)));
        ts.extend(self.diffusion.breakpoints(self.horizon));
        ts.extend(self.drift.breakpoints(self.horizon));
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        ts
    }

    /// `p* = inf_{t, a} 2 k(t, a) / sup_x sigma_bar(t, x)^2 - 1` over the time
    /// lattice. Returns `f64::INFINITY` when the noise vanishes identically.
    pub fn p_star(&self) -> f64 {
        let mut best = f64::INFINITY;
        for t in self.time_lattice() {
            let s = self.diffusion.sigma_bar_sup(t);
            if s == 0.0 {
                continue;
            }
            for k in &self.multiplicity {
                best = best.min(2.0 * k.eval(t) / (s * s) - 1.0);
            }
        }
        best
    }

    /// A random chamber point: `xi` plus a Gaussian perturbation, slid along an
    /// interior direction until its smallest wall distance equals a
    /// log-uniform draw from `[1e-3, 1e1]`.
    pub fn sample_chamber_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let u = self
            .roots
            .interior_direction()
            .unwrap_or_else(|| self.initial.clone());
        let scale = 1.0 + self.initial.iter().map(|v| v * v).sum::<f64>().sqrt();
        let spread: f64 = rng.gen::<f64>() * scale;
        let mut x: Vec<f64> = self
            .initial
            .iter()
            .map(|xi| xi + spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let target = 10f64.powf(rng.gen_range(-3.0..=1.0));
        let shift = self
            .roots
            .roots()
            .iter()
            .map(|r| (target - r.pairing(&x)) / r.pairing(&u))
            .fold(f64::NEG_INFINITY, f64::max);
        for (xi, ui) in x.iter_mut().zip(&u) {
            *xi += shift * ui;
        }
        x
    }

    /// Numerical check of the standing assumptions (i)-(v).
    pub fn validate_assumptions(&self, sample_count: usize, tol: f64, seed: u64) -> AssumptionReport {
        let sample_count = sample_count.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = self.time_lattice();
        let mut outcomes = Vec::with_capacity(5);

        // (i) drift Lipschitz.
        outcomes.push(match &self.drift {
            Drift::Affine { lipschitz, .. } => {
                let mut worst: f64 = 0.0;
                for _ in 0..sample_count {
                    let x = self.sample_chamber_point(&mut rng);
                    let y = self.sample_chamber_point(&mut rng);
                    let bx = self.drift.eval(0.0, &x);
                    let by = self.drift.eval(0.0, &y);
                    let num = bx.iter().zip(&by).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let den = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    if den > 0.0 {
                        worst = worst.max(num / den - lipschitz);
                    }
                }
                ConditionOutcome {
                    condition: Condition::DriftLipschitz,
                    status: if worst <= tol { Status::SampledPass } else { Status::Fail },
                    worst_violation: worst.max(0.0),
                    samples: sample_count,
                    detail: format!("declared constant {lipschitz}"),
                }
            }
            drift => ConditionOutcome::exact(
                Condition::DriftLipschitz,
                format!("Lipschitz constant {}", drift.lipschitz(self.horizon)),
            ),
        });

        // (ii) diffusion Lipschitz: exact for every form.
        outcomes.push(ConditionOutcome::exact(
            Condition::DiffusionLipschitz,
            format!("Lipschitz constant {}", self.diffusion.lipschitz()),
        ));

        // (iii) sup sigma_bar^2 <= 2 k(t, a) on the lattice.
        let mut worst = f64::NEG_INFINITY;
        for &t in &lattice {
            let s = self.diffusion.sigma_bar_sup(t);
            for k in &self.multiplicity {
                worst = worst.max(s * s - 2.0 * k.eval(t));
            }
        }
        outcomes.push(ConditionOutcome {
            condition: Condition::NoiseDominance,
            status: if worst <= tol { Status::Pass } else { Status::Fail },
            worst_violation: worst.max(0.0),
            samples: lattice.len(),
            detail: "checked on the time lattice".into(),
        });

        // (iv) <a, -b(t, x)> / <a, x> <= K(t).
        let (wall_outcome, wall_bound) = self.check_drift_wall_bound(&lattice, sample_count, &mut rng);
        outcomes.push(wall_outcome);

        // (v) pairing identity at sampled interior points and times.
        let mut worst: f64 = 0.0;
        for _ in 0..sample_count {
            let x = self.sample_chamber_point(&mut rng);
            let t = rng.gen::<f64>() * self.horizon;
            let residual = self
                .roots
                .pairing_identity_residual(&self.orbit_values(t), &x)
                .unwrap_or(f64::INFINITY);
            worst = worst.max(residual);
        }
        outcomes.push(ConditionOutcome {
            condition: Condition::PairingIdentity,
            status: if worst <= tol { Status::SampledPass } else { Status::Fail },
            worst_violation: worst,
            samples: sample_count,
            detail: "max relative residual".into(),
        });

        AssumptionReport {
            outcomes,
            drift_wall_bound: wall_bound,
            p_star: self.p_star(),
            l_k: self.l_k(),
        }
    }

    fn check_drift_wall_bound(
        &self,
        lattice: &[f64],
        sample_count: usize,
        rng: &mut ChaCha8Rng,
    ) -> (ConditionOutcome, f64) {
        match &self.drift {
            Drift::Zero => (
                ConditionOutcome::exact(Condition::DriftWallBound, "K = 0".into()),
                0.0,
            ),
            Drift::Linear { lambda } => {
                // The ratio is exactly -lambda(t).
                let k_sup = lattice
                    .iter()
                    .map(|&t| (-lambda.eval(t)).max(0.0))
                    .fold(0.0, f64::max);
                (
                    ConditionOutcome::exact(
                        Condition::DriftWallBound,
                        format!("K(t) = max(0, -lambda(t)), sup {k_sup}"),
                    ),
                    k_sup,
                )
            }
            Drift::Constant { values } => {
                // Bounded iff <a, b> >= 0 for every root; otherwise it blows up at the wall.
                let worst = self
                    .roots
                    .roots()
                    .iter()
                    .map(|r| -r.pairing(values))
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst <= 0.0 {
                    (
                        ConditionOutcome::exact(Condition::DriftWallBound, "ordered drift, K = 0".into()),
                        0.0,
                    )
                } else {
                    (
                        ConditionOutcome {
                            condition: Condition::DriftWallBound,
                            status: Status::Fail,
                            worst_violation: worst,
                            samples: 0,
                            detail: "constant drift pushes toward a wall; ratio unbounded".into(),
                        },
                        f64::INFINITY,
                    )
                }
            }
            Drift::Affine { .. } => {
                let mut k_sup: f64 = 0.0;
                for _ in 0..sample_count {
                    let x = self.sample_chamber_point(rng);
                    let t = lattice[rng.gen_range(0..lattice.len())];
                    let b = self.drift.eval(t, &x);
                    for r in self.roots.roots() {
                        k_sup = k_sup.max(-r.pairing(&b) / r.pairing(&x));
                    }
                }
                (
                    ConditionOutcome {
                        condition: Condition::DriftWallBound,
                        status: Status::SampledPass,
                        worst_violation: 0.0,
                        samples: sample_count,
                        detail: format!("sampled max ratio {k_sup}"),
                    },
                    k_sup,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    DriftLipschitz,
    DiffusionLipschitz,
    NoiseDominance,
    DriftWallBound,
    PairingIdentity,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::DriftLipschitz => "i",
            Condition::DiffusionLipschitz => "ii",
            Condition::NoiseDominance => "iii",
            Condition::DriftWallBound => "iv",
            Condition::PairingIdentity => "v",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    SampledPass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionOutcome {
    pub condition: Condition,
    pub status: Status,
    pub worst_violation: f64,
    pub samples: usize,
    pub detail: String,
}

impl ConditionOutcome {
    fn exact(condition: Condition, detail: String) -> Self {
        ConditionOutcome {
            condition,
            status: Status::Pass,
            worst_violation: 0.0,
            samples: 0,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub outcomes: Vec<ConditionOutcome>,
    /// `sup_t K(t)` (exact or sampled, see the (iv) outcome).
    pub drift_wall_bound: f64,
    pub p_star: f64,
    pub l_k: f64,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.status != Status::Fail)
    }

    pub fn outcome(&self, condition: Condition) -> &ConditionOutcome {
        self.outcomes
            .iter()
            .find(|o| o.condition == condition)
            .expect("every condition is reported")
    }
}

/// Time-dependent Bessel process `dX = s(t) dB + lambda(t) X dt + k(t)/X dt` on `(0, inf)`.
pub fn preset_bessel(
    sigma0: TimeFn,
    lambda: TimeFn,
    k: TimeFn,
    xi: f64,
    horizon: f64,
) -> Result<ModelSpec> {
    ModelSpec::new(
        RootSystem::half_line(),
        horizon,
        vec![xi],
        Diffusion::Scalar { value: sigma0 },
        Drift::Linear { lambda },
        vec![k],
    )
}

/// Non-colliding particles on the line (type A chamber `x_1 > ... > x_d`).
pub fn preset_dyson_a(
    d: usize,
    k: TimeFn,
    diffusion: Diffusion,
    drift: Drift,
    xi: Vec<f64>,
    horizon: f64,
) -> Result<ModelSpec> {
    ModelSpec::new(RootSystem::type_a(d)?, horizon, xi, diffusion, drift, vec![k])
}

/// Type B system with `sigma(t) I` noise and `lambda(t) x` drift; chamber
/// `x_1 > ... > x_d > 0`. `k1` weights the long roots, `k2` the short ones.
pub fn preset_type_b(
    d: usize,
    k1: TimeFn,
    k2: TimeFn,
    sigma: TimeFn,
    lambda: TimeFn,
    xi: Vec<f64>,
    horizon: f64,
) -> Result<ModelSpec> {
    ModelSpec::new(
        RootSystem::type_b(d)?,
        horizon,
        xi,
        Diffusion::Scalar { value: sigma },
        Drift::Linear { lambda },
        vec![k1, k2],
    )
}
