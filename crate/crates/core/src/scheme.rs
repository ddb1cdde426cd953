//! Brownian drivers on nested uniform grids and full-path simulation.
//!
//! Both schemes advance
//!
//! ```text
//! xhat_l  = X_l + sigma(t_l, X_l) dB_l + b(t_l, X_l) dt + theta f(t_l, X_l) dt
//! X_{l+1} = solution of  y = xhat_l + (1 - theta) dt f(t_{l+1}, y)
//! ```
//!
//! with `f = f_k` for [`Variant::Exact`] (solved inside the chamber) and
//! `f = f_{k,eps_n}`, `eps_n = c sqrt(L_k dt)`, for [`Variant::Truncated`]
//! (solved in R^d).
//!
//! # Random streams
//!
//! The increments of path `path_id` under `master_seed` come from ChaCha8
//! seeded with `seed_from_u64(master_seed)` and switched to stream `path_id`;
//! standard normals are drawn with `rand_distr::StandardNormal`, row by row
//! (step-major, then Brownian component). A path therefore depends only on
//! `(master_seed, path_id)`, never on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::implicit_step::{residual_with_weights, StepSolver, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::model::{add_singular_drift, ModelSpec};

/// Uniform grid `t_l = l T / n`, `l = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Grid("a grid needs at least one step".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(TimeGrid { steps, horizon })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, l: usize) -> f64 {
        self.horizon * l as f64 / self.steps as f64
    }
}

/// The per-path random stream. See the module docs for the exact construction.
pub fn path_rng(master_seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(path_id);
    rng
}

/// Brownian increments of one path on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver {
    dim: usize,
    grid: TimeGrid,
    increments: Vec<f64>,
    master_seed: u64,
    path_id: u64,
}

impl BrownianDriver {
    pub fn generate(dim: usize, steps: usize, horizon: f64, master_seed: u64, path_id: u64) -> Result<Self> {
        let grid = TimeGrid::new(steps, horizon)?;
        if dim == 0 {
            return Err(Error::InvalidDimension("Brownian dimension must be positive".into()));
        }
        let sd = grid.dt().sqrt();
        let mut rng = path_rng(master_seed, path_id);
        let increments = (0..steps * dim)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(BrownianDriver {
            dim,
            grid,
            increments,
            master_seed,
            path_id,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path_id(&self) -> u64 {
        self.path_id
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `B(t_{l+1}) - B(t_l)`.
    pub fn increment(&self, l: usize) -> &[f64] {
        &self.increments[l * self.dim..(l + 1) * self.dim]
    }

    /// Sums blocks of `factor` consecutive increments.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianDriver> {
        if factor == 0 || self.grid.steps % factor != 0 {
            return Err(Error::Grid(format!(
                "factor {factor} does not divide {} steps",
                self.grid.steps
            )));
        }
        let steps = self.grid.steps / factor;
        let mut increments = vec![0.0; steps * self.dim];
        for (l, coarse) in increments.chunks_exact_mut(self.dim).enumerate() {
            for fine in self.increments[l * factor * self.dim..(l + 1) * factor * self.dim].chunks_exact(self.dim) {
                for (c, f) in coarse.iter_mut().zip(fine) {
                    *c += f;
                }
            }
        }
        Ok(BrownianDriver {
            dim: self.dim,
            grid: TimeGrid::new(steps, self.grid.horizon)?,
            increments,
            master_seed: self.master_seed,
            path_id: self.path_id,
        })
    }

    /// The driver on a grid of `steps` intervals (coarsening as needed).
    pub fn on_grid(&self, steps: usize) -> Result<BrownianDriver> {
        if steps == 0 || self.grid.steps % steps != 0 {
            return Err(Error::Grid(format!(
                "{steps} steps do not nest in the driver's {} steps",
                self.grid.steps
            )));
        }
        self.coarsen(self.grid.steps / steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Implicit step solved inside the chamber.
    Exact,
    /// Truncated drift, fixed-point step in R^d.
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeConfig {
    pub variant: Variant,
    pub theta: f64,
    pub steps: usize,
    /// Truncation constant `c > 1` in `eps_n = c sqrt(L_k dt)`; truncated variant only.
    pub truncation: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl SchemeConfig {
    pub fn exact(theta: f64, steps: usize) -> Self {
        SchemeConfig {
            variant: Variant::Exact,
            theta,
            steps,
            truncation: 1.1,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn truncated(theta: f64, steps: usize, c: f64) -> Self {
        SchemeConfig {
            variant: Variant::Truncated,
            theta,
            steps,
            truncation: c,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_steps(&self, steps: usize) -> Self {
        SchemeConfig { steps, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Grid("step count must be positive".into()));
        }
        match self.variant {
            Variant::Exact if !(0.0..0.5).contains(&self.theta) => Err(Error::InvalidParameter(format!(
                "exact scheme needs theta in [0, 1/2), got {}",
                self.theta
            ))),
            Variant::Truncated if !(0.0..1.0).contains(&self.theta) => Err(Error::InvalidParameter(format!(
                "truncated scheme needs theta in [0, 1), got {}",
                self.theta
            ))),
            Variant::Truncated if !(self.truncation > 1.0 && self.truncation.is_finite()) => {
                Err(Error::InvalidParameter(format!(
                    "truncation constant must exceed 1, got {}",
                    self.truncation
                )))
            }
            _ if !(self.tol > 0.0) => Err(Error::InvalidParameter("tolerance must be positive".into())),
            _ if self.max_iter == 0 => Err(Error::InvalidParameter("max_iter must be positive".into())),
            _ => Ok(()),
        }
    }

    /// `eps_n = c sqrt(L_k T / n)` for the truncated variant, `None` otherwise.
    pub fn truncation_level(&self, model: &ModelSpec) -> Option<f64> {
        match self.variant {
            Variant::Exact => None,
            Variant::Truncated => {
                Some(truncation_level(self.truncation, model.l_k(), model.horizon() / self.steps as f64))
            }
        }
    }
}

/// `c sqrt(L_k dt)`.
pub fn truncation_level(c: f64, l_k: f64, dt: f64) -> f64 {
    c * (l_k * dt).sqrt()
}

/// One simulated path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathResult {
    pub dim: usize,
    pub grid: TimeGrid,
    /// `(n + 1) x d`, row-major.
    pub states: Vec<f64>,
    pub in_chamber: Vec<bool>,
    pub first_violation: Option<usize>,
    /// Solver iterations per step.
    pub iterations: Vec<u32>,
    pub truncation_level: Option<f64>,
}

impl PathResult {
    pub fn state(&self, l: usize) -> &[f64] {
        &self.states[l * self.dim..(l + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps())
    }

    pub fn left_chamber(&self) -> bool {
        self.first_violation.is_some()
    }
}

/// Reusable path integrator; holds the solver scratch space.
#[derive(Debug, Clone)]
pub struct PathSimulator<'m> {
    model: &'m ModelSpec,
    cfg: SchemeConfig,
    eps: Option<f64>,
    solver: StepSolver,
    orbit_k: Vec<f64>,
    weights: Vec<f64>,
    xhat: Vec<f64>,
}

impl<'m> PathSimulator<'m> {
    pub fn new(model: &'m ModelSpec, cfg: &SchemeConfig) -> Result<Self> {
        cfg.validate()?;
        let rs = model.roots();
        Ok(PathSimulator {
            model,
            eps: cfg.truncation_level(model),
            solver: StepSolver::new(rs, cfg.tol, cfg.max_iter),
            cfg: cfg.clone(),
            orbit_k: vec![0.0; rs.orbit_count()],
            weights: vec![0.0; rs.len()],
            xhat: vec![0.0; rs.dim()],
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    fn load_weights(&mut self, t: f64) {
        for (slot, k) in self.orbit_k.iter_mut().zip(self.model.multiplicity()) {
            *slot = k.eval(t);
        }
        self.model.roots().expand_orbit_values(&self.orbit_k, &mut self.weights);
    }

    /// Simulates one path. The driver is coarsened to the configured grid.
    pub fn run(&mut self, driver: &BrownianDriver) -> Result<PathResult> {
        let model = self.model;
        if driver.dim() != model.noise_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.noise_dim(),
                actual: driver.dim(),
            });
        }
        if driver.grid().horizon() != model.horizon() {
            return Err(Error::Grid(format!(
                "driver horizon {} differs from model horizon {}",
                driver.grid().horizon(),
                model.horizon()
            )));
        }
        let driver = if driver.steps() == self.cfg.steps {
            std::borrow::Cow::Borrowed(driver)
        } else {
            std::borrow::Cow::Owned(driver.on_grid(self.cfg.steps)?)
        };

        let d = model.dim();
        let n = self.cfg.steps;
        let grid = TimeGrid::new(n, model.horizon())?;
        let dt = grid.dt();
        let theta = self.cfg.theta;
        let h = (1.0 - theta) * dt;
        let rs = model.roots();

        let mut states = vec![0.0; (n + 1) * d];
        states[..d].copy_from_slice(model.initial());
        let mut in_chamber = Vec::with_capacity(n + 1);
        in_chamber.push(true);
        let mut iterations = Vec::with_capacity(n);
        let mut first_violation = None;

        for l in 0..n {
            let t = grid.time(l);
            let (done, rest) = states.split_at_mut((l + 1) * d);
            let x = &done[l * d..];
            let next = &mut rest[..d];

            self.xhat.copy_from_slice(x);
            model.diffusion().add_noise(t, x, driver.increment(l), &mut self.xhat);
            model.drift().add_scaled(t, x, dt, &mut self.xhat);
            if theta > 0.0 {
                self.load_weights(t);
                add_singular_drift(rs, &self.weights, x, self.eps, theta * dt, &mut self.xhat);
            }
            self.load_weights(grid.time(l + 1));
            let (iters, _) = match self.eps {
                None => self.solver.solve_exact_into(&self.weights, &self.xhat, h, next),
                Some(eps) => self.solver.solve_truncated_into(&self.weights, &self.xhat, h, eps, next),
            }
            .map_err(|e| e.at_step(l))?;
            iterations.push(iters as u32);

            let inside = rs.min_pairing_unchecked(next) > 0.0;
            if !inside {
                if self.eps.is_none() {
                    return Err(Error::OutsideChamber {
                        min_pairing: rs.min_pairing_unchecked(next),
                    }
                    .at_step(l));
                }
                first_violation.get_or_insert(l + 1);
            }
            in_chamber.push(inside);
        }

        Ok(PathResult {
            dim: d,
            grid,
            states,
            in_chamber,
            first_violation,
            iterations,
            truncation_level: self.eps,
        })
    }

    /// Re-evaluates every step equation of a stored path against its driver.
    pub fn step_residuals(&mut self, path: &PathResult, driver: &BrownianDriver) -> Result<Vec<f64>> {
        let model = self.model;
        let driver = driver.on_grid(path.grid.steps())?;
        let grid = path.grid;
        let dt = grid.dt();
        let theta = self.cfg.theta;
        let rs = model.roots();
        let mut out = Vec::with_capacity(grid.steps());
        for l in 0..grid.steps() {
            let t = grid.time(l);
            let x = path.state(l);
            self.xhat.copy_from_slice(x);
            model.diffusion().add_noise(t, x, driver.increment(l), &mut self.xhat);
            model.drift().add_scaled(t, x, dt, &mut self.xhat);
            if theta > 0.0 {
                self.load_weights(t);
                add_singular_drift(rs, &self.weights, x, self.eps, theta * dt, &mut self.xhat);
            }
            self.load_weights(grid.time(l + 1));
            let y = path.state(l + 1);
            if self.eps.is_none() && !(rs.min_pairing_unchecked(y) > 0.0) {
                return Err(Error::OutsideChamber {
                    min_pairing: rs.min_pairing_unchecked(y),
                }
                .at_step(l));
            }
            out.push(residual_with_weights(rs, &self.weights, &self.xhat, (1.0 - theta) * dt, self.eps, y));
        }
        Ok(out)
    }
}

/// Chamber-preserving theta-Euler-Maruyama path (`theta` in `[0, 1/2)`).
pub fn theta_em_path(model: &ModelSpec, cfg: &SchemeConfig, driver: &BrownianDriver) -> Result<PathResult> {
    if cfg.variant != Variant::Exact {
        return Err(Error::InvalidParameter("theta_em_path needs the exact variant".into()));
    }
    PathSimulator::new(model, cfg)?.run(driver)
}

/// Truncated theta-Euler-Maruyama path (`theta` in `[0, 1)`, `c > 1`). States may
/// leave the chamber; the first such step is recorded.
pub fn truncated_theta_em_path(model: &ModelSpec, cfg: &SchemeConfig, driver: &BrownianDriver) -> Result<PathResult> {
    if cfg.variant != Variant::Truncated {
        return Err(Error::InvalidParameter("truncated_theta_em_path needs the truncated variant".into()));
    }
    PathSimulator::new(model, cfg)?.run(driver)
}

pub fn simulate_path(model: &ModelSpec, cfg: &SchemeConfig, driver: &BrownianDriver) -> Result<PathResult> {
    PathSimulator::new(model, cfg)?.run(driver)
}
