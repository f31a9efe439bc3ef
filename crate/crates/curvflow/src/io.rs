//! CSV and JSON artifacts.

use std::fs;
use std::path::Path;

use curvflow_core::flow::{FlowRecord, MAX_HISTORY};
use curvflow_core::grid::SphereGrid;
use serde::Serialize;

use crate::error::CliResult;

/// Fixed-width scientific notation keeps files byte-stable and lossless.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn record_row(r: &FlowRecord) -> Vec<String> {
    let mut row = vec![r.step.to_string()];
    row.extend(
        [
            r.t, r.tau, r.dt, r.min_rho, r.max_rho, r.osc_rho, r.max_grad_gamma, r.min_lambda, r.eta,
            r.phi, r.q_min, r.q_max, r.u_p, r.v_q, r.j_pq, r.residual,
        ]
        .into_iter()
        .map(fmt),
    );
    row
}

pub fn write_history(path: &Path, history: &[FlowRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FlowRecord::HEADER)?;
    for r in history {
        w.write_record(record_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// `theta,phi,value` per node (phi is 0 on the circle, theta the angle).
pub fn write_field(path: &Path, grid: &SphereGrid, values: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "phi", "value"])?;
    for (i, v) in values.iter().enumerate() {
        let (theta, phi) = grid.coords(i);
        w.write_record([fmt(theta), fmt(phi), fmt(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Least-squares line y = intercept + slope t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub samples: usize,
}

pub fn line_fit(points: &[(f64, f64)]) -> Option<LineFit> {
    if points.len() < 3 {
        return None;
    }
    let m = points.len() as f64;
    let (mt, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + t / m, b + y / m));
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in points {
        stt += (t - mt) * (t - mt);
        sty += (t - mt) * (y - my);
        syy += (y - my) * (y - my);
    }
    if stt == 0.0 {
        return None;
    }
    let slope = sty / stt;
    let r2 = if syy == 0.0 { 1.0 } else { sty * sty / (stt * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mt,
        r2,
        samples: points.len(),
    })
}

/// Exponential decay rate of max|D gamma|^2: the fit of log(max|D gamma|^2) against
/// t over the final half of the run (in time). The rate is minus the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    pub slope: f64,
    pub r2: f64,
    pub samples: usize,
}

pub fn decay_fit(history: &[FlowRecord]) -> Option<DecayFit> {
    let t_end = history.last()?.t;
    let points: Vec<(f64, f64)> = history
        .iter()
        .filter(|r| r.t >= 0.5 * t_end && r.max_grad_gamma > 0.0)
        .map(|r| (r.t, (r.max_grad_gamma * r.max_grad_gamma).ln()))
        .collect();
    let f = line_fit(&points)?;
    Some(DecayFit {
        rate: -f.slope,
        slope: f.slope,
        r2: f.r2,
        samples: f.samples,
    })
}

/// Keeps a bounded, evenly thinned copy of a record stream (same rule as the
/// engine's history), so partial histories can be flushed after a failure.
#[derive(Debug, Default)]
pub struct HistoryBuffer {
    rows: Vec<FlowRecord>,
    stride: usize,
}

impl HistoryBuffer {
    pub fn push(&mut self, r: FlowRecord) {
        if self.stride == 0 {
            self.stride = 1;
        }
        if r.step.is_multiple_of(self.stride) {
            self.rows.push(r);
            if self.rows.len() > MAX_HISTORY {
                let mut idx = 0;
                self.rows.retain(|_| {
                    idx += 1;
                    idx % 2 == 1
                });
                self.stride *= 2;
            }
        }
    }

    pub fn rows(&self) -> &[FlowRecord] {
        &self.rows
    }
}
