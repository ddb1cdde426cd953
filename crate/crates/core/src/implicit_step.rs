//! Per-step nonlinear solves for the two schemes.
//!
//! Exact step: find `y` in the chamber with `y = xhat + h f_k(y)`. This is the
//! stationarity condition of the strictly convex barrier functional
//!
//! ```text
//! phi(y) = |y - xhat|^2 / 2 - h sum_a k_a log <a, y>
//! ```
//!
//! which is minimised by damped Newton. Iterates never leave the chamber: each
//! step is capped at 0.95 of the distance to the nearest wall along the Newton
//! direction and then backtracked.
//!
//! Truncated step: find `y` in R^d with `y = xhat + h f_{k,eps}(y)` by plain
//! fixed-point iteration. For `rho = L eps^-2 h < 1` the map is a contraction
//! and the number of iterations is fixed in advance by the geometric bound
//!
//! ```text
//! |y - y_m| <= sum_a k_a |a| / (L (1 - rho)) * eps * rho^m
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::add_singular_drift;
use crate::root_system::RootSystem;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;

const WALL_FRACTION: f64 = 0.95;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub y: Vec<f64>,
    pub iterations: usize,
    /// `|y - xhat - h f(y)|`.
    pub residual: f64,
    /// `min_a <a, y>`.
    pub wall_distance: f64,
}

/// Positive root of `y^2 - xhat y - h k = 0`, the exact step for `R+ = {1}`.
pub fn closed_form_1d(xhat: f64, h: f64, kval: f64) -> Result<f64> {
    if !(kval > 0.0) {
        return Err(Error::InvalidParameter(format!("multiplicity must be positive, got {kval}")));
    }
    if !(h >= 0.0) {
        return Err(Error::InvalidParameter(format!("step must be non-negative, got {h}")));
    }
    let disc = (xhat * xhat + 4.0 * h * kval).sqrt();
    // Avoid cancellation when xhat < 0.
    Ok(if xhat >= 0.0 {
        0.5 * (xhat + disc)
    } else {
        2.0 * h * kval / (disc - xhat)
    })
}

/// Reusable scratch space for the step solvers. One per worker; the solves
/// themselves are pure functions of their inputs.
#[derive(Debug, Clone)]
pub struct StepSolver {
    rs: RootSystem,
    interior: Option<Vec<f64>>,
    tol: f64,
    max_iter: usize,
    pairings: Vec<f64>,
    grad: Vec<f64>,
    trial_pairings: Vec<f64>,
    trial_grad: Vec<f64>,
    dir: Vec<f64>,
    hess: Vec<f64>,
    trial: Vec<f64>,
}

fn fill_pairings(rs: &RootSystem, y: &[f64], out: &mut [f64]) -> f64 {
    let mut min = f64::INFINITY;
    for (p, root) in out.iter_mut().zip(rs.roots()) {
        *p = root.pairing(y);
        min = min.min(*p);
    }
    min
}

/// `y - xhat - h sum_a w_a a / <a, y>` from cached pairings; returns its norm.
fn fill_gradient(
    rs: &RootSystem,
    weights: &[f64],
    xhat: &[f64],
    h: f64,
    y: &[f64],
    pairings: &[f64],
    out: &mut [f64],
) -> f64 {
    for ((g, yi), xi) in out.iter_mut().zip(y).zip(xhat) {
        *g = yi - xi;
    }
    for ((root, w), p) in rs.roots().iter().zip(weights).zip(pairings) {
        let c = h * w / p;
        for (g, a) in out.iter_mut().zip(root.vector()) {
            *g -= c * a;
        }
    }
    out.iter().map(|g| g * g).sum::<f64>().sqrt()
}

fn barrier(weights: &[f64], xhat: &[f64], h: f64, y: &[f64], pairings: &[f64]) -> f64 {
    let quad: f64 = y.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let logs: f64 = weights.iter().zip(pairings).map(|(w, p)| w * p.ln()).sum();
    0.5 * quad - h * logs
}

impl StepSolver {
    pub fn new(rs: &RootSystem, tol: f64, max_iter: usize) -> Self {
        let d = rs.dim();
        StepSolver {
            interior: rs.interior_direction(),
            rs: rs.clone(),
            tol,
            max_iter,
            pairings: vec![0.0; rs.len()],
            grad: vec![0.0; d],
            trial_pairings: vec![0.0; rs.len()],
            trial_grad: vec![0.0; d],
            dir: vec![0.0; d],
            hess: vec![0.0; d * d],
            trial: vec![0.0; d],
        }
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn check_inputs(&self, weights: &[f64], xhat: &[f64], h: f64) -> Result<()> {
        self.rs.check_dim(xhat.len())?;
        if weights.len() != self.rs.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} root weights, got {}",
                self.rs.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("multiplicities must be positive".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {h}")));
        }
        if xhat.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite step input".into()));
        }
        Ok(())
    }

    /// Newton direction `-H^{-1} g` with `H = I + h sum_a w_a a a^T / <a,y>^2`.
    fn newton_direction(&mut self, weights: &[f64], h: f64) {
        let d = self.rs.dim();
        self.hess.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            self.hess[i * d + i] = 1.0;
        }
        for ((root, w), p) in self.rs.roots().iter().zip(weights).zip(&self.pairings) {
            let c = h * w / (p * p);
            let a = root.vector();
            for i in 0..d {
                if a[i] == 0.0 {
                    continue;
                }
                for j in 0..=i {
                    self.hess[i * d + j] += c * a[i] * a[j];
                }
            }
        }
        cholesky_in_place(&mut self.hess, d);
        for (dv, g) in self.dir.iter_mut().zip(&self.grad) {
            *dv = -g;
        }
        cholesky_solve(&self.hess, d, &mut self.dir);
    }

    /// Exact implicit step with per-root weights `weights` (already evaluated
    /// at the implicit time). Writes the solution into `y`.
    ///
    /// Newton starts from `xhat` when its wall distance is at least
    /// `sqrt(h sum_a w_a |a|^2) / 2`, otherwise from `xhat` slid along the
    /// interior direction to exactly that distance.
    pub fn solve_exact_into(
        &mut self,
        weights: &[f64],
        xhat: &[f64],
        h: f64,
        y: &mut [f64],
    ) -> Result<(usize, f64)> {
        self.check_inputs(weights, xhat, h)?;
        y.copy_from_slice(xhat);
        let scale: f64 = self
            .rs
            .roots()
            .iter()
            .zip(weights)
            .map(|(r, w)| w * r.norm_sq())
            .sum();
        let target = 0.5 * (h * scale).sqrt();
        if self.rs.min_pairing_unchecked(xhat) < target {
            let u = self.interior.as_ref().ok_or_else(|| {
                Error::InvalidParameter("root system has no interior direction to start from".into())
            })?;
            let shift = self
                .rs
                .roots()
                .iter()
                .map(|r| (target - r.pairing(xhat)) / r.pairing(u))
                .fold(f64::NEG_INFINITY, f64::max);
            for (yi, ui) in y.iter_mut().zip(u) {
                *yi += shift * ui;
            }
        }
        self.newton(weights, xhat, h, y)
    }

    /// Damped Newton on the barrier functional from the interior point already in `y`.
    pub(crate) fn newton(&mut self, weights: &[f64], xhat: &[f64], h: f64, y: &mut [f64]) -> Result<(usize, f64)> {
        let rs = &self.rs;
        if !(fill_pairings(rs, y, &mut self.pairings) > 0.0) {
            return Err(Error::OutsideChamber {
                min_pairing: rs.min_pairing_unchecked(y),
            });
        }
        let mut residual = fill_gradient(rs, weights, xhat, h, y, &self.pairings, &mut self.grad);
        for iteration in 0..self.max_iter {
            if residual <= self.tol {
                return Ok((iteration, residual));
            }
            self.newton_direction(weights, h);

            let mut step: f64 = 1.0;
            for (root, p) in self.rs.roots().iter().zip(&self.pairings) {
                let rate = root.pairing(&self.dir);
                if rate < 0.0 {
                    step = step.min(WALL_FRACTION * p / -rate);
                }
            }
            let slope: f64 = self.grad.iter().zip(&self.dir).map(|(g, v)| g * v).sum();
            let current = barrier(weights, xhat, h, y, &self.pairings);

            let mut accepted = false;
            for _ in 0..MAX_BACKTRACK {
                for ((t, yi), v) in self.trial.iter_mut().zip(y.iter()).zip(&self.dir) {
                    *t = yi + step * v;
                }
                if fill_pairings(&self.rs, &self.trial, &mut self.trial_pairings) > 0.0 {
                    let value = barrier(weights, xhat, h, &self.trial, &self.trial_pairings);
                    let trial_residual = fill_gradient(
                        &self.rs,
                        weights,
                        xhat,
                        h,
                        &self.trial,
                        &self.trial_pairings,
                        &mut self.trial_grad,
                    );
                    // Near the optimum barrier differences drown in rounding;
                    // a smaller residual is then the better acceptance signal.
                    if value <= current + ARMIJO * step * slope || trial_residual < residual {
                        y.copy_from_slice(&self.trial);
                        std::mem::swap(&mut self.pairings, &mut self.trial_pairings);
                        std::mem::swap(&mut self.grad, &mut self.trial_grad);
                        residual = trial_residual;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                return Err(Error::SolverFailure {
                    iterations: iteration,
                    residual,
                    best: y.to_vec(),
                });
            }
        }
        if residual <= self.tol {
            return Ok((self.max_iter, residual));
        }
        Err(Error::SolverFailure {
            iterations: self.max_iter,
            residual,
            best: y.to_vec(),
        })
    }

    /// Truncated step with per-root weights. Iterates `y <- xhat + h f_{k,eps}(y)`
    /// from `xhat` at most [`truncated_iteration_count`] times, stopping
    /// earlier once the a-posteriori contraction bound certifies `tol / 2`.
    pub fn solve_truncated_into(
        &mut self,
        weights: &[f64],
        xhat: &[f64],
        h: f64,
        eps: f64,
        y: &mut [f64],
    ) -> Result<(usize, f64)> {
        self.check_inputs(weights, xhat, h)?;
        let c = contraction(&self.rs, weights, h, eps)?;
        let cap = iteration_count(&self.rs, weights, h, eps, self.tol)?;
        // Banach: |y* - y_m| <= rate / (1 - rate) |y_m - y_{m-1}|.
        let step_target = 0.5 * self.tol * (1.0 - c.rate) / c.rate;
        y.copy_from_slice(xhat);
        let mut iterations = 0;
        while iterations < cap {
            self.trial.copy_from_slice(xhat);
            add_singular_drift(&self.rs, weights, y, Some(eps), h, &mut self.trial);
            let moved = y
                .iter()
                .zip(&self.trial)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            y.copy_from_slice(&self.trial);
            iterations += 1;
            if moved <= step_target {
                break;
            }
        }
        self.trial.copy_from_slice(xhat);
        add_singular_drift(&self.rs, weights, y, Some(eps), h, &mut self.trial);
        let residual = y
            .iter()
            .zip(&self.trial)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok((iterations, residual))
    }
}

/// In-place lower Cholesky factor of a row-major SPD matrix (lower triangle used).
fn cholesky_in_place(a: &mut [f64], d: usize) {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        let diag = diag.sqrt();
        a[j * d + j] = diag;
        for i in (j + 1)..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = v / diag;
        }
    }
}

fn cholesky_solve(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * d + k] * b[k];
        }
        b[i] = v / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut v = b[i];
        for k in (i + 1)..d {
            v -= l[k * d + i] * b[k];
        }
        b[i] = v / l[i * d + i];
    }
}

struct Contraction {
    rate: f64,
    /// `sum_a k_a |a|^2` for the given weights.
    scale: f64,
    /// `sum_a k_a |a|`.
    mass: f64,
}

fn contraction(rs: &RootSystem, weights: &[f64], h: f64, eps: f64) -> Result<Contraction> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("truncation level must be positive, got {eps}")));
    }
    let scale: f64 = rs.roots().iter().zip(weights).map(|(r, w)| w * r.norm_sq()).sum();
    let mass: f64 = rs.roots().iter().zip(weights).map(|(r, w)| w * r.norm()).sum();
    let rate = scale * h / (eps * eps);
    if !(rate < 1.0) {
        return Err(Error::ContractionViolated { rate });
    }
    Ok(Contraction { rate, scale, mass })
}

fn bound_after(c: &Contraction, eps: f64, iterations: usize) -> f64 {
    c.mass / (c.scale * (1.0 - c.rate)) * eps * c.rate.powi(iterations as i32)
}

fn iteration_count(rs: &RootSystem, weights: &[f64], h: f64, eps: f64, tol: f64) -> Result<usize> {
    let c = contraction(rs, weights, h, eps)?;
    // Certify |y - y*| <= tol/2 so that the equation residual, at most
    // (1 + rate) |y - y*|, stays below tol.
    let target = 0.5 * tol;
    let initial = bound_after(&c, eps, 0);
    if initial <= target {
        return Ok(0);
    }
    let mut m = ((target / initial).ln() / c.rate.ln()).ceil().max(0.0) as usize;
    // Guard the float ceiling in both directions.
    while m > 0 && bound_after(&c, eps, m - 1) <= target {
        m -= 1;
    }
    while bound_after(&c, eps, m) > target {
        m += 1;
    }
    Ok(m)
}

fn root_weights(rs: &RootSystem, kvals: &[f64]) -> Result<Vec<f64>> {
    rs.check_orbit_values(kvals)?;
    let mut w = vec![0.0; rs.len()];
    rs.expand_orbit_values(kvals, &mut w);
    Ok(w)
}

/// Number of fixed-point iterations the truncated solver performs for tolerance `tol`.
pub fn truncated_iteration_count(rs: &RootSystem, kvals: &[f64], h: f64, eps: f64, tol: f64) -> Result<usize> {
    iteration_count(rs, &root_weights(rs, kvals)?, h, eps, tol)
}

/// A-priori bound on `|y* - y_m|` after `m` fixed-point iterations from `xhat`.
pub fn fixed_point_error_bound(rs: &RootSystem, kvals: &[f64], h: f64, eps: f64, iterations: usize) -> Result<f64> {
    let c = contraction(rs, &root_weights(rs, kvals)?, h, eps)?;
    Ok(bound_after(&c, eps, iterations))
}

/// The fixed-point iterate `y_m` of `y <- xhat + h f_{k,eps}(y)`, `y_0 = xhat`.
pub fn fixed_point_iterate(
    rs: &RootSystem,
    kvals: &[f64],
    xhat: &[f64],
    h: f64,
    eps: f64,
    iterations: usize,
) -> Result<Vec<f64>> {
    rs.check_dim(xhat.len())?;
    let w = root_weights(rs, kvals)?;
    contraction(rs, &w, h, eps)?;
    let mut y = xhat.to_vec();
    let mut next = vec![0.0; xhat.len()];
    for _ in 0..iterations {
        next.copy_from_slice(xhat);
        add_singular_drift(rs, &w, &y, Some(eps), h, &mut next);
        std::mem::swap(&mut y, &mut next);
    }
    Ok(y)
}

/// Solves `y = xhat + h sum_a k_a / <a, y> a` for `y` in the chamber.
/// `kvals` holds one multiplicity per orbit.
pub fn solve_exact_step(rs: &RootSystem, kvals: &[f64], xhat: &[f64], h: f64, tol: f64) -> Result<SolveReport> {
    let w = root_weights(rs, kvals)?;
    let mut solver = StepSolver::new(rs, tol, DEFAULT_MAX_ITER);
    let mut y = vec![0.0; rs.dim()];
    let (iterations, residual) = solver.solve_exact_into(&w, xhat, h, &mut y)?;
    Ok(SolveReport {
        wall_distance: rs.min_pairing_unchecked(&y),
        y,
        iterations,
        residual,
    })
}

/// Solves `y = xhat + h f_{k,eps}(y)` in R^d. Requires `h < eps^2 / L`.
pub fn solve_truncated_step(
    rs: &RootSystem,
    kvals: &[f64],
    xhat: &[f64],
    h: f64,
    eps: f64,
    tol: f64,
) -> Result<SolveReport> {
    let w = root_weights(rs, kvals)?;
    let mut solver = StepSolver::new(rs, tol, DEFAULT_MAX_ITER);
    let mut y = vec![0.0; rs.dim()];
    let (iterations, residual) = solver.solve_truncated_into(&w, xhat, h, eps, &mut y)?;
    Ok(SolveReport {
        wall_distance: rs.min_pairing_unchecked(&y),
        y,
        iterations,
        residual,
    })
}

/// `|y - xhat - h f(y)|` with `f = f_k` (`eps = None`) or `f_{k,eps}`.
pub fn step_residual(
    rs: &RootSystem,
    kvals: &[f64],
    xhat: &[f64],
    h: f64,
    eps: Option<f64>,
    y: &[f64],
) -> Result<f64> {
    rs.check_dim(xhat.len())?;
    rs.check_dim(y.len())?;
    let w = root_weights(rs, kvals)?;
    if eps.is_none() {
        let min_pairing = rs.min_pairing_unchecked(y);
        if !(min_pairing > 0.0) {
            return Err(Error::OutsideChamber { min_pairing });
        }
    }
    Ok(residual_with_weights(rs, &w, xhat, h, eps, y))
}

pub(crate) fn residual_with_weights(
    rs: &RootSystem,
    weights: &[f64],
    xhat: &[f64],
    h: f64,
    eps: Option<f64>,
    y: &[f64],
) -> f64 {
    let mut r: Vec<f64> = y.iter().zip(xhat).map(|(a, b)| a - b).collect();
    add_singular_drift(rs, weights, y, eps, -h, &mut r);
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn closed_form_examples() {
        // Quadratic formula: (1 + sqrt(1.04)) / 2.
        let y = closed_form_1d(1.0, 0.01, 1.0).unwrap();
        assert!((y - 1.009_901_951_359_278_4).abs() < 1e-15);
        assert_eq!(closed_form_1d(0.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(closed_form_1d(5.0, 0.0, 1.0).unwrap(), 5.0);
        assert!(closed_form_1d(1.0, 1.0, 0.0).is_err());
        // Negative branch solves the same quadratic.
        let y = closed_form_1d(-7.0, 0.3, 2.0).unwrap();
        assert!((y * y + 7.0 * y - 0.6).abs() < 1e-14);
        assert!(y > 0.0);
    }

    #[test]
    fn exact_step_matches_closed_form_in_1d() {
        let rs = RootSystem::half_line();
        let y = solve_exact_step(&rs, &[1.0], &[1.0], 0.01, 1e-12).unwrap();
        assert!((y.y[0] - closed_form_1d(1.0, 0.01, 1.0).unwrap()).abs() <= 1e-12);
        let y = solve_exact_step(&rs, &[3.0], &[-4.0], 0.2, 1e-12).unwrap();
        assert!((y.y[0] - closed_form_1d(-4.0, 0.2, 3.0).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn exact_step_symmetric_a2() {
        // xhat = 0: y = (t, -t) with 2t = h k / (2t), so t = 1/sqrt(2) for h k = 2... here
        // h = k = 1 gives y - 0 = (1/(2t)) (1, -1), i.e. t = 1/(2t), t = 1/sqrt(2).
        let rs = RootSystem::type_a(2).unwrap();
        let r = solve_exact_step(&rs, &[1.0], &[0.0, 0.0], 1.0, 1e-12).unwrap();
        let t = 0.5f64.sqrt();
        assert!((r.y[0] - t).abs() < 1e-12 && (r.y[1] + t).abs() < 1e-12);
        assert!((r.wall_distance - 2.0 * t).abs() < 1e-12);
    }

    #[test]
    fn exact_step_deep_inside() {
        let rs = RootSystem::type_a(3).unwrap();
        let xhat = [100.0, 0.0, -100.0];
        let h = 1e-3;
        let r = solve_exact_step(&rs, &[1.0], &xhat, h, 1e-10).unwrap();
        assert!(r.residual <= 1e-10);
        assert!(step_residual(&rs, &[1.0], &xhat, h, None, &r.y).unwrap() <= 1e-10);
        let moved = norm(&r.y.iter().zip(&xhat).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(moved < 10.0 * h / 100.0);
    }

    #[test]
    fn exact_step_from_outside_the_chamber() {
        let rs = RootSystem::type_b(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let xhat: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let h = 10f64.powf(rng.gen_range(-4.0..0.0));
            let k = [rng.gen_range(0.1..10.0), rng.gen_range(0.1..10.0)];
            let r = solve_exact_step(&rs, &k, &xhat, h, 1e-10).unwrap();
            assert!(r.wall_distance > 0.0);
            assert!(r.residual <= 1e-10);
            // <y - xhat, f_k(y)> = |y - xhat|^2 / h >= 0.
            let dy: Vec<f64> = r.y.iter().zip(&xhat).map(|(a, b)| a - b).collect();
            let mut f = vec![0.0; 3];
            let mut w = vec![0.0; rs.len()];
            rs.expand_orbit_values(&k, &mut w);
            add_singular_drift(&rs, &w, &r.y, None, 1.0, &mut f);
            let lhs: f64 = dy.iter().zip(&f).map(|(a, b)| a * b).sum();
            let rhs = dy.iter().map(|v| v * v).sum::<f64>() / h;
            assert!((lhs - rhs).abs() <= 1e-6 * (1.0 + rhs));
        }
    }

    #[test]
    fn newton_solution_is_unique_across_starts() {
        let rs = RootSystem::type_a(4).unwrap();
        let xhat = [0.3, 0.1, 0.2, -0.4];
        let h = 0.05;
        let w = vec![2.0; rs.len()];
        let reference = solve_exact_step(&rs, &[2.0], &xhat, h, 1e-12).unwrap();
        let mut solver = StepSolver::new(&rs, 1e-12, DEFAULT_MAX_ITER);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..32 {
            let mut y: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            y.sort_by(|a, b| b.total_cmp(a));
            assert!(rs.contains(&y));
            solver.newton(&w, &xhat, h, &mut y).unwrap();
            let gap = norm(&y.iter().zip(&reference.y).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(gap <= 1e-8, "{gap}");
        }
    }

    #[test]
    fn truncated_step_agrees_with_exact_when_caps_inactive() {
        let rs = RootSystem::type_a(3).unwrap();
        let xhat = [3.0, 0.0, -3.0];
        let h = 1e-3;
        let eps = 0.2;
        let exact = solve_exact_step(&rs, &[1.0], &xhat, h, 1e-12).unwrap();
        assert!(exact.wall_distance >= eps);
        let trunc = solve_truncated_step(&rs, &[1.0], &xhat, h, eps, 1e-12).unwrap();
        assert!(norm(&exact.y.iter().zip(&trunc.y).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-11);
    }

    #[test]
    fn truncated_step_clamped_branch() {
        let rs = RootSystem::half_line();
        let r = solve_truncated_step(&rs, &[1.0], &[-10.0], 0.5, 1.0, 1e-12).unwrap();
        assert!((r.y[0] + 9.5).abs() < 1e-15);
        assert_eq!(g_eps_value(1.0, r.y[0]), 1.0);
        assert!(r.residual <= 1e-12);
    }

    fn g_eps_value(eps: f64, s: f64) -> f64 {
        crate::model::g_eps(eps, s).unwrap()
    }

    #[test]
    fn truncated_step_refuses_non_contraction() {
        let rs = RootSystem::half_line();
        assert!(matches!(
            solve_truncated_step(&rs, &[1.0], &[1.0], 1.0, 1.0, 1e-10),
            Err(Error::ContractionViolated { .. })
        ));
        assert!(solve_truncated_step(&rs, &[1.0], &[1.0], 2.0, 1.0, 1e-10).is_err());
    }

    #[test]
    fn iteration_count_is_the_certificate_ceiling() {
        let rs = RootSystem::type_a(2).unwrap();
        let k = [5.0];
        let eps = 0.3;
        for rho in [0.1, 0.5, 0.9] {
            let h = rho * eps * eps / 10.0;
            let tol = 1e-10;
            let m = truncated_iteration_count(&rs, &k, h, eps, tol).unwrap();
            // Independent evaluation: mass = 5 sqrt 2, scale = 10.
            let bound = |n: i32| 5.0 * 2f64.sqrt() / (10.0 * (1.0 - rho)) * eps * rho.powi(n);
            assert!(bound(m as i32) <= tol / 2.0);
            assert!(m == 0 || bound(m as i32 - 1) > tol / 2.0);
            let reported = solve_truncated_step(&rs, &k, &[0.1, 0.0], h, eps, tol).unwrap();
            assert!(reported.iterations <= m);
            assert!(reported.residual <= tol);
            let fixed = fixed_point_iterate(&rs, &k, &[0.1, 0.0], h, eps, 10 * m + 10).unwrap();
            let err = fixed.iter().zip(&reported.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err <= tol / 2.0, "rho {rho}: {err}");
        }
    }

    #[test]
    fn step_residual_properties() {
        let rs = RootSystem::type_a(2).unwrap();
        let xhat = [1.0, -1.0];
        // At y = xhat the residual is h |f(xhat)| = h * |(0.5, -0.5)|.
        let r = step_residual(&rs, &[1.0], &xhat, 0.2, None, &xhat).unwrap();
        assert!((r - 0.2 * 0.5f64.sqrt()).abs() < 1e-15);
        // Linear in h at fixed y when y = xhat.
        let r2 = step_residual(&rs, &[1.0], &xhat, 0.4, None, &xhat).unwrap();
        assert!((r2 - 2.0 * r).abs() < 1e-15);
        assert!(matches!(
            step_residual(&rs, &[1.0], &xhat, 0.2, None, &[0.0, 0.0]),
            Err(Error::OutsideChamber { .. })
        ));
        assert!(step_residual(&rs, &[1.0], &xhat, 0.2, Some(0.1), &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn three_one_dimensional_paths_agree() {
        let rs = RootSystem::half_line();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let xhat = rng.gen_range(0.5..5.0);
            let h = rng.gen_range(1e-4..1e-2);
            let k = rng.gen_range(0.1..2.0);
            let closed = closed_form_1d(xhat, h, k).unwrap();
            let newton = solve_exact_step(&rs, &[k], &[xhat], h, 1e-12).unwrap().y[0];
            // Cap inactive: eps below the solution and contraction satisfied.
            let eps = (0.5 * xhat).max((2.0 * h * k).sqrt());
            assert!(eps < closed && h * k / (eps * eps) < 1.0);
            let fixed = solve_truncated_step(&rs, &[k], &[xhat], h, eps, 1e-12).unwrap().y[0];
            assert!((closed - newton).abs() <= 1e-10);
            assert!((closed - fixed).abs() <= 1e-10);
        }
    }
}
