//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs in a few minutes on one core with the optimized test profile.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dunkl_core::implicit_step::{
    closed_form_1d, fixed_point_iterate, solve_exact_step, solve_truncated_step, truncated_iteration_count,
};
use dunkl_core::mc_lab::{
    chamber_exit, cir_mean_check, fit_order, increment_scaling, negative_moments, scheme_gap, strong_error,
};
use dunkl_core::model::{preset_bessel, preset_dyson_a, preset_type_b, Diffusion, Drift, ModelSpec, TimeFn};
use dunkl_core::root_system::RootSystem;
use dunkl_core::scheme::{BrownianDriver, PathSimulator, SchemeConfig};

type Outcome = Result<String, String>;

const SEED: u64 = 20_240_601;

fn c(v: f64) -> TimeFn {
    TimeFn::Constant(v)
}

fn dyson(d: usize, k: f64) -> ModelSpec {
    let xi: Vec<f64> = (0..d).map(|i| (d - 1) as f64 / 2.0 - i as f64).map(|v| 2.0 * v / (d - 1) as f64).collect();
    preset_dyson_a(d, c(k), Diffusion::identity(), Drift::Zero, xi, 1.0).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Strictly ordered point, optionally with a positive last coordinate.
fn random_chamber_point(rng: &mut ChaCha8Rng, d: usize, positive: bool) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        if positive {
            x.iter_mut().for_each(|v| *v = v.abs());
        }
        x.sort_by(|a, b| b.total_cmp(a));
        if x.windows(2).all(|w| w[0] - w[1] > 1e-3) && (!positive || x[d - 1] > 1e-3) {
            return x;
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let systems = (2..=6)
        .map(|d| (RootSystem::type_a(d).unwrap(), false))
        .chain((2..=5).map(|d| (RootSystem::type_b(d).unwrap(), true)));
    for (rs, positive) in systems {
        for _ in 0..100 {
            let x = random_chamber_point(&mut rng, rs.dim(), positive);
            let k: Vec<f64> = (0..rs.orbit_count()).map(|_| rng.gen_range(0.1..10.0)).collect();
            worst = worst.max(rs.pairing_identity_residual(&k, &x).map_err(|e| e.to_string())?);
            cases += 1;
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("{cases} points, worst residual {worst:.2e} (<= 1e-10), {elapsed:.2?} (< 1 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let line = RootSystem::half_line();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let xhat = rng.gen_range(-5.0..5.0);
        let h = rng.gen_range(1e-4..1.0);
        let k = rng.gen_range(0.1..10.0);
        let newton = solve_exact_step(&line, &[k], &[xhat], h, 1e-10).map_err(|e| e.to_string())?;
        let exact = closed_form_1d(xhat, h, k).map_err(|e| e.to_string())?;
        worst = worst.max((newton.y[0] - exact).abs());
    }
    // y = (t, -t) with t^2 = h k / 2.
    let a2 = RootSystem::type_a(2).unwrap();
    let mut sym: f64 = 0.0;
    for (h, k) in [(1.0, 1.0), (0.5, 3.0), (0.01, 7.0)] {
        let y = solve_exact_step(&a2, &[k], &[0.0, 0.0], h, 1e-10).map_err(|e| e.to_string())?.y;
        let t = (h * k / 2.0f64).sqrt();
        sym = sym.max((y[0] - t).abs()).max((y[1] + t).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-10 && sym <= 1e-10 && elapsed < Duration::from_secs(5),
        format!("1-d max gap {worst:.2e}, A(2) symmetric gap {sym:.2e} (<= 1e-10), {elapsed:.2?} (< 5 s)"),
    )
}

fn criterion_3() -> Outcome {
    let model = dyson(3, 4.0);
    let mut bad_states = 0usize;
    let mut worst_residual: f64 = 0.0;
    for theta in [0.0, 0.25, 0.49] {
        let cfg = SchemeConfig::exact(theta, 256);
        let mut sim = PathSimulator::new(&model, &cfg).map_err(|e| e.to_string())?;
        for id in 0..1000 {
            let driver = BrownianDriver::generate(3, 256, 1.0, SEED, id).map_err(|e| e.to_string())?;
            let path = sim.run(&driver).map_err(|e| e.to_string())?;
            bad_states += (0..=256)
                .filter(|&l| !model.roots().contains(path.state(l)))
                .count();
            let residuals = sim.step_residuals(&path, &driver).map_err(|e| e.to_string())?;
            worst_residual = residuals.iter().copied().fold(worst_residual, f64::max);
        }
    }
    check(
        bad_states == 0 && worst_residual <= 1e-9,
        format!("3 x 1000 paths: {bad_states} states outside, worst step residual {worst_residual:.2e} (<= 1e-9)"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let systems = [
        RootSystem::type_a(2).unwrap(),
        RootSystem::type_a(3).unwrap(),
        RootSystem::type_b(2).unwrap(),
        RootSystem::type_b(3).unwrap(),
    ];
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut instances = 0;
    for rho in [0.1, 0.5, 0.9] {
        for _ in 0..100 {
            let rs = &systems[rng.gen_range(0..systems.len())];
            let k: Vec<f64> = (0..rs.orbit_count()).map(|_| rng.gen_range(0.1..10.0)).collect();
            // Independent constants: L = sum k_a |a|^2, mass = sum k_a |a|.
            let (mut l, mut mass) = (0.0, 0.0);
            for (i, root) in rs.roots().iter().enumerate() {
                let w = k[rs.orbit_of(i)];
                let n2: f64 = root.vector().iter().map(|v| v * v).sum();
                l += w * n2;
                mass += w * n2.sqrt();
            }
            let eps = rng.gen_range(0.05..1.0);
            let h = rho * eps * eps / l;
            let xhat: Vec<f64> = (0..rs.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = rng.gen_range(1..40);
            let y_m = fixed_point_iterate(rs, &k, &xhat, h, eps, m).map_err(|e| e.to_string())?;
            let y_long = fixed_point_iterate(rs, &k, &xhat, h, eps, 10 * m).map_err(|e| e.to_string())?;
            let err = y_m.iter().zip(&y_long).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let bound = mass / (l * (1.0 - rho)) * eps * rho.powi(m as i32);
            if err > bound {
                violations += 1;
            }
            worst_ratio = worst_ratio.max(err / bound);
            // The solver's own stopping rule certifies tol / 2.
            let tol = 1e-10;
            let solved = solve_truncated_step(rs, &k, &xhat, h, eps, tol).map_err(|e| e.to_string())?;
            let cap = truncated_iteration_count(rs, &k, h, eps, tol).map_err(|e| e.to_string())?;
            let reference = fixed_point_iterate(rs, &k, &xhat, h, eps, 10 * cap + 10).map_err(|e| e.to_string())?;
            let solver_err = solved.y.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if solver_err > tol / 2.0 || solved.iterations > cap {
                violations += 1;
            }
            instances += 1;
        }
    }
    check(
        violations == 0,
        format!("{instances} instances, {violations} bound violations, worst error/bound {worst_ratio:.3}"),
    )
}

fn slope_line(curve: &dunkl_core::mc_lab::ErrorCurve) -> Result<(f64, bool, String), String> {
    let fit = fit_order(curve).map_err(|e| e.to_string())?;
    let fitted = &curve.rms_sup_error;
    let decreasing = fitted.windows(2).all(|w| w[1] < w[0]);
    let errors: Vec<String> = fitted.iter().map(|e| format!("{e:.3e}")).collect();
    Ok((
        fit.slope,
        decreasing,
        format!("slope {:.3} +/- {:.3}, errors [{}]", fit.slope, fit.half_width, errors.join(", ")),
    ))
}

fn criterion_5() -> Outcome {
    let model = dyson(2, 4.0);
    let steps: Vec<usize> = (4..=9).map(|e| 1 << e).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for theta in [0.0, 0.25] {
        let curve = strong_error(&model, &SchemeConfig::exact(theta, 1), &steps, 1 << 13, 10_000, SEED)
            .map_err(|e| e.to_string())?;
        let (slope, decreasing, text) = slope_line(&curve)?;
        ok &= slope <= -0.40 && decreasing;
        parts.push(format!("theta={theta}: {text}, strictly decreasing: {decreasing}"));
    }
    check(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let model = dyson(2, 5.0);
    let steps: Vec<usize> = (4..=9).map(|e| 1 << e).collect();
    let truncated = strong_error(&model, &SchemeConfig::truncated(0.0, 1, 1.1), &steps, 1 << 13, 10_000, SEED)
        .map_err(|e| e.to_string())?;
    let (slope, _, text) = slope_line(&truncated)?;
    let exact16 = strong_error(&model, &SchemeConfig::exact(0.0, 1), &[16], 1 << 13, 10_000, SEED)
        .map_err(|e| e.to_string())?
        .rms_sup_error[0];
    let gap = scheme_gap(
        &model,
        &SchemeConfig::truncated(0.0, 512, 1.1),
        &SchemeConfig::exact(0.0, 512),
        10_000,
        SEED,
    )
    .map_err(|e| e.to_string())?;
    check(
        slope <= -0.40 && gap.rms_sup_gap < exact16,
        format!(
            "p* = {}, truncated {text}; gap at n=512 {:.3e} < exact error at n=16 {exact16:.3e}",
            model.p_star(),
            gap.rms_sup_gap
        ),
    )
}

fn criterion_7() -> Outcome {
    let model = dyson(2, 4.0);
    let mut reports = Vec::new();
    for e in [10, 11] {
        reports.push(
            negative_moments(&model, &SchemeConfig::exact(0.0, 1 << e), 2.0, 10_000, SEED, true)
                .map_err(|e| e.to_string())?,
        );
    }
    let (a, b) = (&reports[0], &reports[1]);
    let finite = reports
        .iter()
        .all(|r| r.estimates.iter().flatten().all(|v| v.is_finite() && *v > 0.0));
    let ratio = a.max_estimate / b.max_estimate;
    let sup_ratio = a.pathwise_sup.as_ref().unwrap()[0] / b.pathwise_sup.as_ref().unwrap()[0];
    let end_ratio = a.estimates[0].last().unwrap() / b.estimates[0].last().unwrap();
    let within = |r: f64| (0.5..=2.0).contains(&r);

    // sigma = 0, b = 0, k = 1, xi = 1: X(t) = sqrt(1 + 2t).
    let ode = preset_bessel(c(0.0), c(0.0), c(1.0), 1.0, 1.0).unwrap();
    let r = negative_moments(&ode, &SchemeConfig::exact(0.0, 1 << 18), 2.0, 1, SEED, false).map_err(|e| e.to_string())?;
    let ode_err = r
        .times
        .iter()
        .zip(&r.estimates[0])
        .map(|(t, v)| (v - (1.0 + 2.0 * t).powf(-1.0)).abs())
        .fold(0.0, f64::max);
    check(
        finite && within(ratio) && within(sup_ratio) && within(end_ratio) && ode_err <= 1e-6,
        format!(
            "max E<a,X>^-2: {:.4} (n=2^10) vs {:.4} (n=2^11), ratio {ratio:.4}; pathwise-sup ratio {sup_ratio:.4}; \
             t=T ratio {end_ratio:.4}; deterministic case max error {ode_err:.2e} (n=2^18, <= 1e-6)",
            a.max_estimate, b.max_estimate
        ),
    )
}

fn criterion_8() -> Outcome {
    let model = preset_bessel(c(1.0), c(0.0), c(1.0), 1.0, 1.0).unwrap();
    let lags: Vec<usize> = (0..=6).map(|e| 1 << e).collect();
    let r = increment_scaling(&model, &SchemeConfig::exact(0.0, 1 << 10), &lags, 10_000, SEED)
        .map_err(|e| e.to_string())?;
    let fit = r.fit.ok_or("no fit")?;
    check(
        (0.8..=1.2).contains(&fit.slope),
        format!("slope {:.4} +/- {:.4} over tau in [2^-10, 2^-4] (in [0.8, 1.2])", fit.slope, fit.half_width),
    )
}

fn criterion_9() -> Outcome {
    let model = preset_type_b(2, c(5.0), c(5.0), c(1.0), c(0.0), vec![0.6, 0.3], 1.0).unwrap();
    let steps: Vec<usize> = (5..=9).map(|e| 1 << e).collect();
    let r = chamber_exit(&model, &SchemeConfig::truncated(0.0, 1, 1.1), &steps, 20_000, SEED)
        .map_err(|e| e.to_string())?;
    // Non-increasing up to confidence-interval overlap.
    let monotone = (1..steps.len())
        .all(|i| r.exit_fraction[i] <= r.exit_fraction[i - 1] || r.ci_low[i] <= r.ci_high[i - 1]);
    let last = *r.exit_fraction.last().unwrap();
    let fractions: Vec<String> = r.exit_fraction.iter().map(|f| format!("{f:.5}")).collect();
    check(
        monotone && last <= 0.05,
        format!(
            "p* = {}, exit fractions n=2^5..2^9: [{}], non-increasing within CI: {monotone}, last <= 0.05",
            model.p_star(),
            fractions.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let r = cir_mean_check(1.0, 0.5, 1.0, 1.0, 1.0, 0.0, 1 << 10, 100_000, SEED).map_err(|e| e.to_string())?;
    // Independent oracle: m' = 3 + m, m(0) = 1  =>  m(1) = 4e - 3.
    let oracle = 4.0 * std::f64::consts::E - 3.0;
    let ok = (r.exact_mean - oracle).abs() < 1e-12 && (r.estimate - oracle).abs() <= 3.0 * r.std_error + 0.01 * oracle;
    check(
        ok,
        format!(
            "mean X(T)^2 = {:.5} +/- {:.5}, exact {oracle:.5}, |diff| {:.5} <= {:.5}",
            r.estimate,
            r.std_error,
            (r.estimate - oracle).abs(),
            3.0 * r.std_error + 0.01 * oracle
        ),
    )
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let experiments = [
        (
            r#"{ "variant": "exact", "theta": 0.25 }"#,
            r#"{ "kind": "convergence" }"#,
            r#""paths": 256, "n_list": [8, 16, 32], "n_ref": 128"#,
            "convergence.csv",
        ),
        (
            r#"{ "variant": "truncated", "c": 1.1 }"#,
            r#"{ "kind": "chamber-exit" }"#,
            r#""paths": 512, "n_list": [8, 16, 32]"#,
            "exit.csv",
        ),
        (
            r#"{ "variant": "exact" }"#,
            r#"{ "kind": "moments", "p": 2.0, "pathwise_sup": true }"#,
            r#""paths": 200, "n": 32"#,
            "moments.csv",
        ),
    ];
    let model = r#"{
      "roots": { "family": "A", "dim": 2 }, "horizon": 1.0, "initial": [0.5, -0.5],
      "diffusion": { "form": "scalar", "value": 1.0 }, "multiplicity": [5.0]
    }"#;
    let mut compared = 0;
    for (e, (scheme, experiment, run, file)) in experiments.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in [1, 4, 0] {
            let out = dir.path().join(format!("e{e}-t{threads}"));
            let text = format!(
                r#"{{ "model": {model}, "scheme": {scheme}, "experiment": {experiment},
                     "run": {{ {run}, "seed": 99, "threads": {threads}, "output_dir": {:?} }} }}"#,
                out.to_str().unwrap()
            );
            let cfg = dir.path().join(format!("e{e}-t{threads}.json"));
            fs::write(&cfg, text).map_err(|e| e.to_string())?;
            let status = Command::new(env!("CARGO_BIN_EXE_dunkl-lab"))
                .arg("run")
                .arg(&cfg)
                .env_remove("DUNKL_OUTPUT_DIR")
                .output()
                .map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Err(format!("{file}: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(fs::read(out.join(file)).map_err(|e| e.to_string())?);
        }
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("{file} differs across thread budgets"));
        }
        compared += 1;
    }
    Ok(format!("{compared} experiments byte-identical under 1, 4 and all threads"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("pairing identity on A(2..6), B(2..5)", criterion_1),
        ("exact step vs closed form", criterion_2),
        ("chamber preservation, Dyson A(3)", criterion_3),
        ("fixed-point certificate", criterion_4),
        ("strong order, exact scheme", criterion_5),
        ("strong order, truncated scheme", criterion_6),
        ("negative moments", criterion_7),
        ("increment scaling, Bessel", criterion_8),
        ("chamber retention, type B", criterion_9),
        ("squared-process mean", criterion_10),
        ("determinism across thread budgets", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{:.1?}]", i + 1, start.elapsed());
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
