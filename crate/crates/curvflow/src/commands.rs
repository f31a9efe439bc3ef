//! The `flow`, `solve` and `oracle` commands.

use std::cell::RefCell;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use curvflow_core::curvature::assumption_audit;
use curvflow_core::flow::{Flow, FlowRecord, Monitors, ShapeState, Verdict};
use curvflow_core::minkowski::{solve, SolveReport};
use curvflow_core::oracle::{spherical_tstar, spherical_theta, CRITICAL_TOL};
use serde::Serialize;

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io::{decay_fit, write_field, write_history, write_json, DecayFit, HistoryBuffer};

pub const HISTORY_FILE: &str = "history.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "solve_report.json";
pub const SHAPE_FILE: &str = "shape.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";

/// Samples drawn by the curvature-assumption audit before a flow.
pub const AUDIT_SAMPLES: usize = 1000;

/// Fault injection for testing the failure paths.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlowFaults {
    /// Replace the right-hand side at node 0 by NaN from this step on.
    pub nan_at_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub seed: u64,
    pub samples: usize,
    pub max_homogeneity_error: f64,
    pub min_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSummary {
    pub verdict: Verdict,
    pub steps: usize,
    pub t: f64,
    pub final_min_rho: f64,
    pub final_max_rho: f64,
    pub final_osc: f64,
    /// osc rho / min rho.
    pub final_rel_osc: f64,
    pub final_residual: f64,
    /// Fitted decay of max|D gamma|^2 over the final half of the run.
    pub decay: Option<DecayFit>,
    pub t_star_fit: Option<f64>,
    pub t_star_used: Option<f64>,
    pub initial_scale: f64,
    pub final_phi: Option<f64>,
    pub monitors: Monitors,
    pub audit: AuditSummary,
    pub config: RunConfig,
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))
}

fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(SNAPSHOT_DIR).join(format!("step_{step:08}.csv"))
}

pub fn cmd_flow(path: &Path, faults: FlowFaults) -> CliResult<FlowSummary> {
    let (cfg, out) = RunConfig::load(path, Mode::Flow)?;
    let fc = cfg.flow.clone().expect("validated flow section");
    prepare_dir(&out)?;
    if cfg.snapshot_stride > 0 {
        prepare_dir(&out.join(SNAPSHOT_DIR))?;
    }
    let audit = assumption_audit(&fc.curvature, fc.n, AUDIT_SAMPLES, cfg.random_seed)?;
    let audit = AuditSummary {
        seed: cfg.random_seed,
        samples: audit.samples,
        max_homogeneity_error: audit.max_homogeneity_error,
        min_gradient: audit.min_gradient,
    };

    let nan_hook = |step: usize, rhs: &mut [f64]| {
        if faults.nan_at_step.is_some_and(|s| step >= s) {
            rhs[0] = f64::NAN;
        }
    };
    let buffer = RefCell::new(HistoryBuffer::default());
    let io_error: RefCell<Option<CliError>> = RefCell::new(None);
    let stride = cfg.snapshot_stride;
    let observer = |rec: &FlowRecord, state: &ShapeState| {
        buffer.borrow_mut().push(*rec);
        if stride > 0 && rec.step.is_multiple_of(stride) && io_error.borrow().is_none() {
            if let Err(e) = write_field(&snapshot_path(&out, rec.step), state.grid(), state.values()) {
                *io_error.borrow_mut() = Some(e);
            }
        }
    };
    let mut flow = Flow::new(&fc)?.with_observer(&observer);
    if faults.nan_at_step.is_some() {
        flow = flow.with_rhs_hook(&nan_hook);
    }
    let start = flow.initial_state(&cfg.initial_shape)?;
    write_field(&out.join("initial.csv"), start.grid(), start.values())?;
    let outcome = match flow.run_from(start) {
        Ok(o) => o,
        Err(e) => {
            write_history(&out.join(HISTORY_FILE), buffer.borrow().rows())?;
            return Err(e.into());
        }
    };
    if let Some(e) = io_error.into_inner() {
        return Err(e);
    }
    write_history(&out.join(HISTORY_FILE), &outcome.history)?;
    let fin = &outcome.final_state;
    write_field(&out.join("final.csv"), fin.grid(), fin.values())?;
    let last = *outcome.last();
    let summary = FlowSummary {
        verdict: outcome.verdict,
        steps: outcome.steps,
        t: outcome.t,
        final_min_rho: last.min_rho,
        final_max_rho: last.max_rho,
        final_osc: last.osc_rho,
        final_rel_osc: last.osc_rho / last.min_rho,
        final_residual: last.residual,
        decay: decay_fit(&outcome.history),
        t_star_fit: outcome.t_star_fit,
        t_star_used: outcome.t_star_used,
        initial_scale: outcome.initial_scale,
        final_phi: outcome.final_phi,
        monitors: outcome.monitors,
        audit,
        config: cfg.resolved(),
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveSummary {
    #[serde(flatten)]
    pub report: SolveReport,
    pub wall_time_s: f64,
    pub config: RunConfig,
}

pub fn cmd_solve(path: &Path) -> CliResult<SolveSummary> {
    let (cfg, out) = RunConfig::load(path, Mode::Solve)?;
    let cfg = cfg.resolved();
    let prob = cfg.problem.clone().expect("validated problem section");
    let opts = cfg.solver.clone().expect("resolved solver section");
    prepare_dir(&out)?;
    let clock = Instant::now();
    let sol = solve(&prob, &cfg.initial_shape, &opts)?;
    let wall_time_s = clock.elapsed().as_secs_f64();
    write_history(&out.join(HISTORY_FILE), &sol.history)?;
    write_field(&out.join(SHAPE_FILE), sol.shape.grid(), sol.shape.u())?;
    let summary = SolveSummary {
        report: sol.report,
        wall_time_s,
        config: cfg,
    };
    write_json(&out.join(REPORT_FILE), &summary)?;
    Ok(summary)
}

/// Theta(r, t) and, for supercritical exponents, T*(r) as printable lines.
pub fn cmd_oracle(r: f64, t: f64, alpha: f64, delta: f64, beta: f64, eta: f64) -> CliResult<String> {
    let mut text = String::new();
    let supercritical = alpha + delta + beta > 1.0 + CRITICAL_TOL;
    match spherical_theta(r, t, alpha, delta, beta, eta) {
        Ok(theta) => text.push_str(&format!("theta = {theta:.16e}\n")),
        Err(e) if supercritical => text.push_str(&format!("theta undefined: {e}\n")),
        Err(e) => return Err(e.into()),
    }
    if supercritical {
        let ts = spherical_tstar(r, alpha, delta, beta, eta)?;
        text.push_str(&format!("t_star = {ts:.16e}\n"));
    }
    Ok(text)
}
