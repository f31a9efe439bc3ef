//! Closed-form radius of a sphere moving under the original flow, and its blow-up time.
//!
//! A round sphere of radius r satisfies r' = eta r^s with s = alpha + delta + beta.

use alloc::format;

use crate::error::{Error, Result};
use crate::math;

/// Exponent sums within this distance of 1 use the exponential branch.
pub const CRITICAL_TOL: f64 = 1e-12;

fn check(r: f64, t: f64, beta: f64, eta: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("initial radius must be positive, got {r}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if !(beta > 0.0 && eta > 0.0) {
        return Err(Error::Domain(format!(
            "beta and eta must be positive, got {beta} and {eta}"
        )));
    }
    Ok(())
}

/// Radius at time t of the sphere that starts with radius r.
pub fn spherical_theta(r: f64, t: f64, alpha: f64, delta: f64, beta: f64, eta: f64) -> Result<f64> {
    check(r, t, beta, eta)?;
    let s = alpha + delta + beta;
    if (s - 1.0).abs() <= CRITICAL_TOL {
        return Ok(r * math::exp(eta * t));
    }
    let base = math::powf(r, 1.0 - s) + (1.0 - s) * eta * t;
    if !(base > 0.0) {
        return Err(Error::Domain(format!(
            "t = {t} is at or beyond the blow-up time {}",
            math::powf(r, 1.0 - s) / ((s - 1.0) * eta)
        )));
    }
    Ok(math::powf(base, 1.0 / (1.0 - s)))
}

/// Finite blow-up time of the sphere of radius r; only defined when s > 1.
pub fn spherical_tstar(r: f64, alpha: f64, delta: f64, beta: f64, eta: f64) -> Result<f64> {
    check(r, 0.0, beta, eta)?;
    let s = alpha + delta + beta;
    if s <= 1.0 + CRITICAL_TOL {
        return Err(Error::Domain(format!(
            "no finite blow-up time for alpha + delta + beta = {s} <= 1"
        )));
    }
    Ok(math::powf(r, 1.0 - s) / ((s - 1.0) * eta))
}
