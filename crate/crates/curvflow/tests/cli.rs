use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curvflow"))
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_cfg(cmd: &str, path: &Path) -> Output {
    bin().arg(cmd).arg(path).output().unwrap()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn normalized_flow(out: &str) -> Value {
    json!({
        "flow": {
            "variant": "radial_normalized", "alpha": -1.0, "delta": 0.0,
            "curvature": {"kind": "sigma_k_root", "k": 1, "argument": "principal_curvatures", "beta": 1.0},
            "n": 2, "n_theta": 8, "n_phi": 16, "t_end": 50.0, "max_steps": 200000,
            "stop_osc_tol": 1e-3
        },
        "initial_shape": {"kind": "radial_perturbation", "radius": 1.0, "epsilon": 0.1, "zonal_mode": 2},
        "output_dir": out,
        "snapshot_stride": 500
    })
}

#[test]
fn subcritical_flow_converges_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", &normalized_flow("run"));
    let out = run_cfg("flow", &cfg);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("run");
    let s = read_json(run_dir.join("summary.json"));
    assert_eq!(s["verdict"], "converged");
    assert!(s["final_osc"].as_f64().unwrap() < 1e-3);
    assert!(s["decay"]["rate"].as_f64().unwrap() > 0.0);
    let history = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
    assert!(history.starts_with("step,t,tau,dt,"));
    assert!(run_dir.join("snapshots/step_00000000.csv").exists());
    let fin = std::fs::read_to_string(run_dir.join("final.csv")).unwrap();
    assert!(fin.starts_with("theta,phi,value"));
    assert_eq!(fin.lines().count(), 8 * 16 + 1);
}

#[test]
fn supercritical_flow_blows_up_with_fitted_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "flow": {
            "variant": "support_original", "alpha": 0.0, "delta": 0.0,
            "curvature": {"kind": "sigma_k_root", "k": 2, "argument": "principal_radii", "beta": 2.0},
            "n": 2, "n_theta": 8, "n_phi": 16, "t_end": 2.0, "max_steps": 1000000
        },
        "initial_shape": {"kind": "ellipsoid", "axes": [1.0, 1.0, 1.2]}
    });
    let out = run_cfg("flow", &write(dir.path(), "blow.json", &cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = read_json(dir.path().join("out/summary.json"));
    assert_eq!(s["verdict"], "blown_up");
    assert!(s["t_star_fit"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ not json").unwrap();
    assert_eq!(run_cfg("flow", &p).status.code(), Some(2));
    let mut cfg = normalized_flow("x");
    cfg["flow"]["colour"] = json!("blue");
    assert_eq!(run_cfg("flow", &write(dir.path(), "unknown.json", &cfg)).status.code(), Some(2));
    let mut cfg = normalized_flow("x");
    cfg["flow"]["dt_safety"] = json!(3.0);
    assert_eq!(run_cfg("flow", &write(dir.path(), "range.json", &cfg)).status.code(), Some(2));
    assert_eq!(run_cfg("flow", &dir.path().join("missing.json")).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_4_and_flushes_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flow.json", &normalized_flow("nan"));
    let out = bin().arg("flow").arg(&cfg).args(["--inject-nan-step", "5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("step 5"));
    let history = std::fs::read_to_string(dir.path().join("nan/history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 5);
}

#[test]
fn outputs_are_deterministic_and_summaries_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", &normalized_flow("a"));
    let b = write(dir.path(), "b.json", &normalized_flow("b"));
    assert!(run_cfg("flow", &a).status.success());
    assert!(run_cfg("flow", &b).status.success());
    for f in ["history.csv", "final.csv", "snapshots/step_00000500.csv"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let first = read_json(dir.path().join("a/summary.json"));
    let replay = write(dir.path(), "replay.json", &first["config"]);
    assert!(run_cfg("flow", &replay).status.success());
    assert_eq!(read_json(dir.path().join("a/summary.json")), first);
}

fn solve_cfg(problem: Value, out: &str) -> Value {
    json!({
        "problem": problem,
        "solver": {"n_theta": 8, "n_phi": 16, "stop_residual_tol": 1e-4},
        "initial_shape": {"kind": "ellipsoid", "axes": [1.0, 1.1, 0.9]},
        "output_dir": out
    })
}

#[test]
fn solve_writes_report_and_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = solve_cfg(json!({"equation": "lp_cm", "k": 1, "p": 4.0, "n": 2}), "cm");
    let out = run_cfg("solve", &write(dir.path(), "cm.json", &cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(dir.path().join("cm/solve_report.json"));
    assert_eq!(r["regime"], "sigma_k_convex_psi");
    assert_eq!(r["subsequential"], false);
    assert!(r["residual"].as_f64().unwrap() <= 1e-4);
    assert!(r["rel_osc_u"].as_f64().unwrap() <= 1e-3);
    assert_eq!(r["alpha"], -2.0);
    assert!(r["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["config"]["solver"]["max_steps"], 2_000_000);
    let shape = std::fs::read_to_string(dir.path().join("cm/shape.csv")).unwrap();
    assert_eq!(shape.lines().count(), 8 * 16 + 1);
}

#[test]
fn out_of_regime_soliton_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    // p = q = k + 1 gives alpha + delta + beta = 1.
    let cfg = solve_cfg(json!({"equation": "soliton", "k": 2, "p": 3.0, "q": 3.0, "n": 2}), "s");
    let out = run_cfg("solve", &write(dir.path(), "s.json", &cfg));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpha + delta + beta < 1"));
    let cfg = solve_cfg(json!({"equation": "lp_dual_minkowski", "p": 0.0, "q": 0.0, "n": 2}), "a");
    let out = run_cfg("solve", &write(dir.path(), "a.json", &cfg));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Alexandrov"));
}

#[test]
fn even_psi_dual_problem_is_flagged_subsequential() {
    let dir = tempfile::tempdir().unwrap();
    let psi = json!({"kind": "quadratic", "c0": 1.0, "terms": [{"direction": [0.0, 0.0, 1.0], "coeff": 0.1}]});
    let cfg = solve_cfg(
        json!({"equation": "lp_dual_minkowski", "p": 1.0, "q": 2.0, "n": 2, "psi": psi}),
        "even",
    );
    let out = run_cfg("solve", &write(dir.path(), "even.json", &cfg));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = read_json(dir.path().join("even/solve_report.json"));
    assert_eq!(r["regime"], "gauss_even_psi");
    assert_eq!(r["subsequential"], true);
}

#[test]
fn oracle_prints_closed_forms() {
    let out = run(&["oracle", "1", "0.5", "-1", "0", "1", "1"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "theta = 1.5000000000000000e0\n");
    let out = run(&["oracle", "1", "0", "0", "0", "2", "1"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("t_star = 1.0000000000000000e0"));
    assert_eq!(run(&["oracle", "-1", "0", "0", "0", "1", "1"]).status.code(), Some(2));
}

#[test]
fn validate_quick_passes_and_names_injected_faults() {
    let out = bin().args(["validate", "quick"]).env("CURVFLOW_THREADS", "2").output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let out = run(&["validate", "quick", "--inject-fault", "stencil"]);
    assert_eq!(out.status.code(), Some(4));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("failed: stencil_order_s1"), "{text}");
}
