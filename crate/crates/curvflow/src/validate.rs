//! Invariant suites run by `curvflow validate`.
//!
//! `quick` covers the curvature functions, the oracle and everything on S^1;
//! `full` adds S^2 grids up to 64 x 128 and short runs of every flow variant.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use curvflow_core::curvature::reference::{fd_gradient, sigma_k_bruteforce};
use curvflow_core::curvature::{assumption_audit, f_grad, f_value, sigma_k, Argument, CurvatureSpec};
use curvflow_core::flow::{run, Flow, FlowConfig, PsiSpec, PsiTerm, Variant, Verdict};
use curvflow_core::grid::{Jet, SphereGrid};
use curvflow_core::minkowski::{solve, Equation, ProblemSpec, SolveOptions};
use curvflow_core::oracle::{spherical_tstar, spherical_theta};
use curvflow_core::shape::InitialShape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Deliberate defects for checking that the suites catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Scales every computed second derivative by 1.05, an error that does not
    /// shrink under refinement.
    Stencil,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Outcome = Result<String, String>;
type SuiteFn = fn(Option<Fault>) -> Outcome;

const SEED: u64 = 20_240_601;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

fn fixed(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

fn sigma(k: usize, argument: Argument, beta: f64) -> CurvatureSpec {
    CurvatureSpec::sigma_k_root(k, argument, beta).expect("valid sigma_k spec")
}

fn differentiate(grid: &SphereGrid, w: &[f64], fault: Option<Fault>) -> Vec<Jet> {
    let mut jets = grid.differentiate(w);
    if fault == Some(Fault::Stencil) {
        for j in &mut jets {
            j.hess[0] *= 1.05;
        }
    }
    jets
}

fn sigma_k_vs_bruteforce(_: Option<Fault>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=8usize);
        let k = rng.gen_range(0..=n);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        let scale = sigma_k_bruteforce(&abs, k).max(f64::MIN_POSITIVE);
        worst = worst.max((sigma_k(&v, k) - sigma_k_bruteforce(&v, k)).abs() / scale);
    }
    check(worst <= 1e-12, format!("max relative error {worst:.2e} over 10^4 tuples"))
}

fn specs() -> Vec<(usize, CurvatureSpec)> {
    let mut out = Vec::new();
    for n in [2usize, 3, 4] {
        for k in 1..=n {
            out.push((n, sigma(k, Argument::PrincipalCurvatures, 1.0)));
        }
        out.push((n, CurvatureSpec::quotient(2, 1, Argument::PrincipalCurvatures, 1.0).unwrap()));
        out.push((n, CurvatureSpec::power_mean(-1.0, Argument::PrincipalRadii, 1.0).unwrap()));
    }
    out
}

fn random_positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.2..2.0)).collect()
}

fn gradients_vs_differences(_: Option<Fault>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst = 0.0f64;
    for (n, spec) in specs() {
        for _ in 0..200 {
            let v = random_positive(&mut rng, n);
            let g = f_grad(&spec, &v).map_err(|e| e.to_string())?;
            let f = |x: &[f64]| f_value(&spec, x).unwrap_or(f64::NAN);
            let fd = fd_gradient(&f, &v, 1e-3);
            for (a, b) in g.iter().zip(&fd) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
    }
    check(worst <= 1e-7, format!("max gradient mismatch {worst:.2e}"))
}

fn homogeneity(_: Option<Fault>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = 0.0f64;
    for (n, spec) in specs() {
        for _ in 0..200 {
            let v = random_positive(&mut rng, n);
            let t = rng.gen_range(0.1..10.0);
            let f = f_value(&spec, &v).map_err(|e| e.to_string())?;
            let tv: Vec<f64> = v.iter().map(|x| x * t).collect();
            let ft = f_value(&spec, &tv).map_err(|e| e.to_string())?;
            let g = f_grad(&spec, &v).map_err(|e| e.to_string())?;
            let euler: f64 = g.iter().zip(&v).map(|(a, b)| a * b).sum();
            worst = worst.max((ft - t * f).abs() / (t * f)).max((euler - f).abs() / f);
        }
        assumption_audit(&spec, n, 200, SEED).map_err(|e| e.to_string())?;
    }
    check(worst <= 1e-10, format!("max homogeneity/Euler error {worst:.2e}"))
}

fn oracle_ode(_: Option<Fault>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst = 0.0f64;
    for (alpha, delta, beta) in [(-1.0, 0.0, 1.0), (0.0, 0.0, 1.0), (0.0, 0.0, 2.0), (1.0, -0.5, 1.0)] {
        let s = alpha + delta + beta;
        for _ in 0..20 {
            let r = rng.gen_range(0.5..2.0);
            let eta = rng.gen_range(0.5..2.0);
            let t_max = if s > 1.0 {
                0.5 * spherical_tstar(r, alpha, delta, beta, eta).map_err(|e| e.to_string())?
            } else {
                2.0
            };
            let t = rng.gen_range(0.1 * t_max..t_max);
            let th = |t: f64| spherical_theta(r, t, alpha, delta, beta, eta).unwrap_or(f64::NAN);
            let d = |h: f64| (th(t + h) - th(t - h)) / (2.0 * h);
            let h = 1e-3 * t_max;
            let rich = (4.0 * d(h / 2.0) - d(h)) / 3.0;
            let exact = eta * th(t).powf(s);
            worst = worst.max((rich - exact).abs() / exact);
        }
    }
    check(worst <= 1e-8, format!("max ODE defect {worst:.2e} at 80 samples"))
}

fn circle_stencils(fault: Option<Fault>) -> Outcome {
    let mut errs = Vec::new();
    for n in [32, 64, 128] {
        let g = SphereGrid::circle(n).map_err(|e| e.to_string())?;
        let w: Vec<f64> = (0..n).map(|i| (3.0 * g.coords(i).0).cos()).collect();
        let jets = differentiate(&g, &w, fault);
        let err = (0..n)
            .map(|i| {
                let t = g.coords(i).0;
                (jets[i].hess[0] + 9.0 * (3.0 * t).cos())
                    .abs()
                    .max((jets[i].grad[0] + 3.0 * (3.0 * t).sin()).abs())
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    check(
        ratios.iter().all(|&r| r >= 3.5),
        format!("errors {}, refinement ratios {} (need >= 3.5)", sci(&errs), fixed(&ratios)),
    )
}

fn quadratic_form(a: &[[f64; 3]; 3], x: &[f64; 3], y: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            s += x[r] * a[r][c] * y[c];
        }
    }
    s
}

fn sphere_stencils(fault: Option<Fault>) -> Outcome {
    let a = [[1.0, 0.4, -0.3], [0.4, -0.5, 0.2], [-0.3, 0.2, 0.8]];
    let mut errs = Vec::new();
    for nt in [16, 32, 64] {
        let g = SphereGrid::sphere(nt, 2 * nt).map_err(|e| e.to_string())?;
        let w: Vec<f64> = g.points().iter().map(|p| quadratic_form(&a, p, p)).collect();
        let jets = differentiate(&g, &w, fault);
        let mut err = 0.0f64;
        for (i, j) in jets.iter().enumerate() {
            let p = g.points()[i];
            let f = g.frame(i);
            let q = quadratic_form(&a, &p, &p);
            let exact = Jet {
                grad: [2.0 * quadratic_form(&a, &f[0], &p), 2.0 * quadratic_form(&a, &f[1], &p)],
                hess: [
                    2.0 * quadratic_form(&a, &f[0], &f[0]) - 2.0 * q,
                    2.0 * quadratic_form(&a, &f[0], &f[1]),
                    2.0 * quadratic_form(&a, &f[1], &f[1]) - 2.0 * q,
                ],
            };
            for c in 0..2 {
                err = err.max((j.grad[c] - exact.grad[c]).abs());
            }
            for c in 0..3 {
                err = err.max((j.hess[c] - exact.hess[c]).abs());
            }
        }
        errs.push(err);
    }
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    check(
        ratios.iter().all(|&r| r >= 3.5),
        format!("errors {} on 16x32..64x128, ratios {} (need >= 3.5)", sci(&errs), fixed(&ratios)),
    )
}

/// Max |u - 1| after 10^3 steps from the unit sphere for the three normalized flows.
fn fixed_point_drift(n: usize, n_theta: usize, n_phi: usize) -> Outcome {
    use Argument::{PrincipalCurvatures, PrincipalRadii};
    let mut worst = 0.0f64;
    for (variant, spec) in [
        (Variant::RadialNormalized, sigma(n, PrincipalCurvatures, 1.0)),
        (Variant::SupportNormalizedSigmaK, sigma(1, PrincipalRadii, 1.0)),
        (Variant::SupportNormalizedGauss, sigma(n, PrincipalRadii, 2.0)),
    ] {
        let mut cfg = FlowConfig::new(variant, -1.0, -0.5, spec, n);
        cfg.n_theta = n_theta;
        cfg.n_phi = n_phi;
        cfg.t_end = 1e6;
        let flow = Flow::new(&cfg).map_err(|e| e.to_string())?;
        let mut state = flow
            .initial_state(&InitialShape::Sphere { radius: 1.0 })
            .map_err(|e| e.to_string())?;
        let mut t = 0.0;
        for step in 0..1000 {
            let (next, dt) = flow.advance(&state, t, step).map_err(|e| e.to_string())?;
            state = next;
            t += dt;
        }
        let drift = state.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        worst = worst.max(drift);
    }
    check(worst <= 1e-6, format!("max drift {worst:.2e} over 10^3 steps, 3 variants"))
}

fn circle_fixed_points(_: Option<Fault>) -> Outcome {
    fixed_point_drift(1, 64, 0)
}

fn sphere_fixed_points(_: Option<Fault>) -> Outcome {
    fixed_point_drift(2, 16, 32)
}

fn circle_oracle(_: Option<Fault>) -> Outcome {
    let mut cfg = FlowConfig::new(
        Variant::RadialOriginal,
        -1.0,
        0.0,
        sigma(1, Argument::PrincipalCurvatures, 1.0),
        1,
    );
    cfg.t_end = 0.5;
    let out = run(&cfg, &InitialShape::Sphere { radius: 1.0 }).map_err(|e| e.to_string())?;
    let exact = spherical_theta(1.0, 0.5, -1.0, 0.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let err = (out.last().max_rho - exact).abs() / exact;
    check(err <= 1e-6, format!("circle radius at t = 0.5: relative error {err:.2e}"))
}

fn sphere_oracle(_: Option<Fault>) -> Outcome {
    let mut cfg = FlowConfig::new(
        Variant::RadialOriginal,
        0.0,
        0.0,
        sigma(2, Argument::PrincipalCurvatures, 1.0),
        2,
    );
    cfg.n_theta = 32;
    cfg.n_phi = 64;
    cfg.t_end = 0.5;
    cfg.dt_override = Some(1e-3);
    let out = run(&cfg, &InitialShape::Sphere { radius: 1.0 }).map_err(|e| e.to_string())?;
    let exact = 0.5f64.exp();
    let err = out
        .final_state
        .rho()
        .iter()
        .map(|r| (r - exact).abs() / exact)
        .fold(0.0, f64::max);
    check(err <= 1e-6, format!("32x64 sphere at t = 0.5: relative error {err:.2e}"))
}

fn gauss_functionals(_: Option<Fault>) -> Outcome {
    let mut cfg = FlowConfig::new(
        Variant::SupportNormalizedGauss,
        0.0,
        0.0,
        sigma(2, Argument::PrincipalRadii, 2.0),
        2,
    );
    cfg.n_theta = 16;
    cfg.n_phi = 16;
    cfg.t_end = 0.5;
    cfg.psi = PsiSpec::Quadratic {
        c0: 1.0,
        terms: vec![PsiTerm {
            direction: [0.0, 0.0, 1.0],
            coeff: 0.1,
        }],
    };
    let init = InitialShape::Ellipsoid {
        axes: vec![1.0, 1.0, 1.3],
    };
    let out = run(&cfg, &init).map_err(|e| e.to_string())?;
    let m = out.monitors;
    check(
        m.j_increase <= 1e-8 && m.v_q_drift <= 1e-3,
        format!("J increase {:.2e}, V_q drift {:.2e} over {} steps", m.j_increase, m.v_q_drift, out.steps),
    )
}

fn sigma_k_barrier(_: Option<Fault>) -> Outcome {
    let mut cfg = FlowConfig::new(
        Variant::SupportNormalizedSigmaK,
        -1.0,
        -0.5,
        sigma(1, Argument::PrincipalRadii, 1.0),
        2,
    );
    cfg.n_theta = 16;
    cfg.n_phi = 16;
    cfg.t_end = 0.5;
    let init = InitialShape::Ellipsoid {
        axes: vec![1.0, 1.0, 1.3],
    };
    let out = run(&cfg, &init).map_err(|e| e.to_string())?;
    let m = out.monitors;
    check(
        m.barrier_max_rise <= 1e-6 && m.barrier_min_drop <= 1e-6,
        format!(
            "max(Q_max, eta) rise {:.2e}, min(Q_min, eta) drop {:.2e}",
            m.barrier_max_rise, m.barrier_min_drop
        ),
    )
}

fn blowup_fit(_: Option<Fault>) -> Outcome {
    let mut cfg = FlowConfig::new(
        Variant::SupportOriginal,
        0.0,
        0.0,
        sigma(2, Argument::PrincipalRadii, 2.0),
        2,
    );
    cfg.n_theta = 8;
    cfg.n_phi = 16;
    cfg.t_end = 2.0;
    let out = run(&cfg, &InitialShape::Sphere { radius: 1.0 }).map_err(|e| e.to_string())?;
    let ts = out.t_star_fit.unwrap_or(f64::NAN);
    check(
        out.verdict == Verdict::BlownUp && (ts - 1.0).abs() <= 0.02,
        format!("verdict {:?}, fitted T* = {ts:.6}", out.verdict),
    )
}

fn round_solutions(_: Option<Fault>) -> Outcome {
    let opts = SolveOptions {
        n_theta: 8,
        n_phi: 16,
        ..SolveOptions::default()
    };
    let init = InitialShape::Ellipsoid {
        axes: vec![1.0, 1.1, 0.9],
    };
    let mut detail = Vec::new();
    for prob in [
        ProblemSpec::new(Equation::LpCm, Some(1), 4.0, None, 2),
        ProblemSpec::new(Equation::LpDualMinkowski, None, 3.0, Some(2.0), 2),
    ] {
        let sol = solve(&prob, &init, &opts).map_err(|e| e.to_string())?;
        let r = &sol.report;
        if !(r.residual <= 1e-3 && r.rel_osc_u <= 1e-3) {
            return Err(format!("{:?}: residual {:.2e}, osc/mean {:.2e}", prob.equation, r.residual, r.rel_osc_u));
        }
        detail.push(format!("{:?} residual {:.1e}", prob.equation, r.residual));
    }
    Ok(detail.join(", "))
}

fn suites(level: Level) -> Vec<(&'static str, SuiteFn)> {
    let mut v: Vec<(&'static str, SuiteFn)> = vec![
        ("sigma_k_bruteforce", sigma_k_vs_bruteforce),
        ("f_grad_finite_differences", gradients_vs_differences),
        ("homogeneity_euler", homogeneity),
        ("oracle_ode", oracle_ode),
        ("stencil_order_s1", circle_stencils),
        ("fixed_points_s1", circle_fixed_points),
        ("circle_oracle", circle_oracle),
    ];
    if level == Level::Full {
        v.extend([
            ("stencil_order_s2", sphere_stencils as SuiteFn),
            ("fixed_points_s2", sphere_fixed_points),
            ("sphere_oracle_32x64", sphere_oracle),
            ("gauss_flow_functionals", gauss_functionals),
            ("sigma_k_barrier", sigma_k_barrier),
            ("blowup_time_fit", blowup_fit),
            ("round_solutions", round_solutions),
        ]);
    }
    v
}

/// Runs the suites of `level` on up to `threads` workers; results keep suite order.
pub fn run_suites(level: Level, threads: usize, fault: Option<Fault>) -> Vec<SuiteResult> {
    let list = suites(level);
    let next = AtomicUsize::new(0);
    let results: Arc<Mutex<Vec<Option<SuiteResult>>>> = Arc::new(Mutex::new(vec![None; list.len()]));
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, list.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(name, suite)) = list.get(i) else {
                    break;
                };
                let clock = Instant::now();
                let outcome = std::panic::catch_unwind(|| suite(fault))
                    .unwrap_or_else(|_| Err("suite panicked".into()));
                let (passed, detail) = match outcome {
                    Ok(d) => (true, d),
                    Err(d) => (false, d),
                };
                results.lock().expect("result lock")[i] = Some(SuiteResult {
                    name,
                    passed,
                    detail,
                    seconds: clock.elapsed().as_secs_f64(),
                });
            });
        }
    });
    let mut guard = results.lock().expect("result lock");
    guard.drain(..).map(|r| r.expect("every suite ran")).collect()
}

/// Worker count: CURVFLOW_THREADS if set to a positive integer, else all cores.
pub fn worker_count() -> usize {
    std::env::var("CURVFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn format_table(results: &[SuiteResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  result  seconds  detail\n", "suite");
    for r in results {
        out.push_str(&format!(
            "{:<width$}  {:<6}  {:>7.2}  {}\n",
            r.name,
            if r.passed { "pass" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    out
}
