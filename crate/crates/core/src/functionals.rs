//! Exponent dictionary (alpha, delta, beta) <-> (p, q), the weighted means U_p and
//! V_q, the entropy J_{p,q} = U_p - V_q and the stationarity gap of the Gauss-type flow.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{min_max, ScalarField};
use crate::math;
use crate::shape::{RadialShape, SupportShape};

/// Exponents closer to zero than this use the logarithmic branch.
pub const ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QStar {
    Finite(f64),
    Infinite,
    /// q <= 0, where q* plays no role.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    /// Degree of the curvature function (n for the Gauss-type problems, k for sigma_k).
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub q_star: QStar,
}

impl Exponents {
    pub fn sum(&self) -> f64 {
        self.alpha + self.delta + self.beta
    }
}

fn q_star(q: f64, n: f64) -> QStar {
    if q > n + 1.0 {
        QStar::Finite(q / (q - n))
    } else if q == n + 1.0 {
        QStar::Finite(n + 1.0)
    } else if q > 1.0 {
        QStar::Finite(n * q / (q - 1.0))
    } else if q > 0.0 {
        QStar::Infinite
    } else {
        QStar::Undefined
    }
}

pub fn exponents_from(alpha: f64, delta: f64, beta: f64, n: usize) -> Result<Exponents> {
    if !(beta > 0.0) || n == 0 {
        return Err(Error::Domain(alloc::format!(
            "exponents need beta > 0 and n >= 1, got beta = {beta}, n = {n}"
        )));
    }
    let nf = n as f64;
    let q = nf + 1.0 + nf * delta / beta;
    let p = 1.0 + nf * (1.0 - alpha) / beta;
    Ok(Exponents {
        alpha,
        delta,
        beta,
        n,
        p,
        q,
        q_star: q_star(q, nf),
    })
}

/// Inverse of [`exponents_from`]: alpha = 1 - beta (p - 1) / n, delta = beta (q - n - 1) / n.
pub fn alpha_delta_from(p: f64, q: f64, beta: f64, n: usize) -> Result<(f64, f64)> {
    if !(beta > 0.0) || n == 0 {
        return Err(Error::Domain(alloc::format!(
            "exponents need beta > 0 and n >= 1, got beta = {beta}, n = {n}"
        )));
    }
    let nf = n as f64;
    Ok((1.0 - beta * (p - 1.0) / nf, beta * (q - nf - 1.0) / nf))
}

fn mean_power(values: impl Iterator<Item = (f64, f64)>, p: f64) -> f64 {
    // (value, weight) pairs; returns the weighted mean of v^p / p, or of log v for p = 0.
    let (mut num, mut den) = (0.0, 0.0);
    let log = p.abs() < ZERO_TOL;
    for (v, w) in values {
        num += w * if log { math::ln(v) } else { math::powf(v, p) };
        den += w;
    }
    let m = num / den;
    if log {
        m
    } else {
        m / p
    }
}

/// U_p = (1/p) mean of u^p with respect to psi^(-n/beta) dx (log u when p = 0).
pub fn u_p(shape: &SupportShape, psi: &ScalarField, p: f64, beta: f64) -> f64 {
    let n = shape.dim() as f64;
    let g = shape.grid();
    mean_power(
        shape
            .u()
            .iter()
            .zip(psi.values())
            .zip(g.weights())
            .map(|((&u, &s), &w)| (u, w * math::powf(s, -n / beta))),
        p,
    )
}

/// V_q = (1/q) mean of rho^q over the sphere of directions (log rho when q = 0).
/// The direction integral is taken on the normal grid through the reverse-Gauss-map
/// Jacobian u / (rho^{n+1} K); the mean divides by the same discrete integral of the
/// Jacobian (the measure of the direction sphere), which keeps the scaling law exact.
pub fn v_q(shape: &SupportShape, q: f64) -> Result<f64> {
    let g = shape.grid();
    let n = shape.dim() as i32;
    if let Some(node) = shape.det_h().iter().position(|&d| !(d > 0.0)) {
        return Err(Error::NonConvex {
            what: "principal radius product",
            node,
            value: shape.det_h()[node],
        });
    }
    let log = q.abs() < ZERO_TOL;
    let (mut total, mut area) = (0.0, 0.0);
    for (i, (&r, &w)) in shape.rho().iter().zip(g.weights()).enumerate() {
        let jac = shape.u()[i] * shape.det_h()[i] / math::powi(r, n + 1);
        total += w * jac * if log { math::ln(r) } else { math::powf(r, q) };
        area += w * jac;
    }
    let m = total / area;
    Ok(if log { m } else { m / q })
}

pub fn j_pq(shape: &SupportShape, psi: &ScalarField, exps: &Exponents) -> Result<f64> {
    Ok(u_p(shape, psi, exps.p, exps.beta) - v_q(shape, exps.q)?)
}

/// U_p of a convex radial shape with psi = 1, through the Gauss map Jacobian
/// dx = K rho^{n+1} / u d xi. `None` if the shape is not convex.
pub fn u_p_radial(shape: &RadialShape, p: f64) -> Option<f64> {
    let n = shape.dim();
    let g = shape.grid();
    let mut pairs = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        let k: f64 = shape.curvatures(i).iter().product();
        if !(shape.curvatures(i)[0] > 0.0) {
            return None;
        }
        let (r, u) = (shape.rho()[i], shape.u()[i]);
        pairs.push((u, g.weights()[i] * k * math::powi(r, n as i32 + 1) / u));
    }
    Some(mean_power(pairs.into_iter(), p))
}

/// V_q of a radial shape, integrated directly over directions.
pub fn v_q_radial(shape: &RadialShape, q: f64) -> f64 {
    let g = shape.grid();
    let log = q.abs() < ZERO_TOL;
    let total: f64 = shape
        .rho()
        .iter()
        .zip(g.weights())
        .map(|(&r, &w)| w * if log { math::ln(r) } else { math::powf(r, q) })
        .sum();
    let m = total / g.area();
    if log {
        m
    } else {
        m / q
    }
}

/// h = psi u^(alpha-1) rho^delta K^(-beta/n) at every node.
pub fn gauss_ratio(shape: &SupportShape, psi: &ScalarField, alpha: f64, delta: f64, beta: f64) -> Vec<f64> {
    let n = shape.dim() as f64;
    shape
        .u()
        .iter()
        .zip(shape.rho())
        .zip(shape.det_h())
        .zip(psi.values())
        .map(|(((&u, &r), &d), &s)| {
            s * math::powf(u, alpha - 1.0) * math::powf(r, delta) * math::powf(d, beta / n)
        })
        .collect()
}

/// Oscillation of h * phi over the nodes; zero exactly at solitons of the Gauss-type flow.
pub fn stationarity_gap(
    shape: &SupportShape,
    psi: &ScalarField,
    alpha: f64,
    delta: f64,
    beta: f64,
    phi_now: f64,
) -> f64 {
    let h = gauss_ratio(shape, psi, alpha, delta, beta);
    let (lo, hi) = min_max(&h);
    (hi - lo) * phi_now
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::SphereGrid;
    use crate::shape::{jacobian_reverse_gauss, make_support, InitialShape};
    use alloc::sync::Arc;
    use core::f64::consts::PI;

    fn grid() -> Arc<SphereGrid> {
        Arc::new(SphereGrid::sphere(16, 32).unwrap())
    }

    fn ball(r: f64) -> SupportShape {
        make_support(ScalarField::constant(grid(), r)).unwrap()
    }

    #[test]
    fn exponent_dictionary() {
        let e = exponents_from(0.0, 0.0, 1.0, 2).unwrap();
        assert_eq!((e.p, e.q), (3.0, 3.0));
        assert_eq!(e.q_star, QStar::Finite(3.0));
        let e = exponents_from(1.0, -1.5, 1.0, 2).unwrap();
        assert_eq!((e.p, e.q), (1.0, 0.0));
        assert_eq!(e.q_star, QStar::Undefined);
        assert_eq!(q_star(0.5, 2.0), QStar::Infinite);
        assert_eq!(q_star(4.0, 2.0), QStar::Finite(2.0));
        assert_eq!(q_star(2.0, 2.0), QStar::Finite(4.0));
        assert_eq!(alpha_delta_from(3.0, 3.0, 1.0, 2).unwrap(), (0.0, 0.0));
        assert_eq!(alpha_delta_from(1.0, 3.0, 1.0, 2).unwrap().0, 1.0);
        assert!(exponents_from(0.0, 0.0, 0.0, 2).is_err());
    }

    #[test]
    fn round_trip() {
        for &(a, d, b, n) in &[(0.3, -0.2, 1.5, 2), (-1.0, 0.5, 2.0, 1), (2.0, -3.0, 0.7, 3)] {
            let e = exponents_from(a, d, b, n).unwrap();
            let (a2, d2) = alpha_delta_from(e.p, e.q, b, n).unwrap();
            assert!((a - a2).abs() < 1e-14 && (d - d2).abs() < 1e-14);
        }
    }

    #[test]
    fn ball_values() {
        let one = ScalarField::constant(grid(), 1.0);
        let b = ball(1.0);
        assert!((u_p(&b, &one, 2.0, 1.0) - 0.5).abs() < 1e-14);
        assert!((v_q(&b, 3.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let e = exponents_from(0.0, 0.0, 1.0, 2).unwrap();
        let e2 = Exponents { p: 2.0, q: 3.0, ..e };
        assert!((j_pq(&b, &one, &e2).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        let r = 1.7;
        let br = ball(r);
        assert!((u_p(&br, &one, 0.0, 1.0) - r.ln()).abs() < 1e-14);
        assert!((u_p(&br, &one, 2.5, 1.0) - r.powf(2.5) / 2.5).abs() < 1e-12);
        assert!((v_q(&br, 0.0).unwrap() - r.ln()).abs() < 1e-12);
        let e0 = Exponents { p: 0.0, q: 0.0, ..e };
        assert!(j_pq(&br, &one, &e0).unwrap().abs() < 1e-12);
        assert!(stationarity_gap(&b, &one, 0.0, 0.0, 2.0, 1.0).abs() < 1e-14);
    }

    #[test]
    fn ellipsoid_volume_and_gap() {
        let g = Arc::new(SphereGrid::sphere(32, 64).unwrap());
        let s = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.0, 1.2] }
            .support(&g)
            .unwrap();
        let vol = 4.0 * PI / 3.0 * 1.2;
        let divergence: f64 = g.integrate(
            &s.u().iter().zip(s.det_h()).map(|(u, d)| u * d).collect::<Vec<_>>(),
        ) / 3.0;
        let area = jacobian_reverse_gauss(&s).integrate();
        let v3 = v_q(&s, 3.0).unwrap();
        assert!((v3 - vol / (4.0 * PI)).abs() < 1e-3);
        assert!((v3 - divergence / area).abs() < 1e-12);
        let one = ScalarField::constant(g, 1.0);
        assert!(stationarity_gap(&s, &one, 0.0, 0.0, 2.0, 1.0) > 1e-2);
    }

    #[test]
    fn scaling_laws() {
        let g = grid();
        let psi = ScalarField::from_fn(g.clone(), |x| 1.0 + 0.1 * x[2] * x[2]).unwrap();
        let base = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.1, 1.3] };
        let s = base.support(&g).unwrap();
        let r = 1.6;
        let sr = make_support(
            ScalarField::new(g.clone(), s.u().iter().map(|u| r * u).collect()).unwrap(),
        )
        .unwrap();
        for p in [-1.5, 0.0, 2.0] {
            let (a, b) = (u_p(&s, &psi, p, 2.0), u_p(&sr, &psi, p, 2.0));
            let expect = if p == 0.0 { a + r.ln() } else { r.powf(p) * a };
            assert!((b - expect).abs() < 1e-12 * expect.abs().max(1.0));
            let (a, b) = (v_q(&s, p).unwrap(), v_q(&sr, p).unwrap());
            let expect = if p == 0.0 { a + r.ln() } else { r.powf(p) * a };
            assert!((b - expect).abs() < 1e-12 * expect.abs().max(1.0), "{p} {b} {expect}");
        }
    }

    #[test]
    fn radial_variants_agree_with_support_ones() {
        let g = Arc::new(SphereGrid::sphere(32, 64).unwrap());
        let shape = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.2, 0.9] };
        let s = shape.support(&g).unwrap();
        let r = shape.radial(&g).unwrap();
        let one = ScalarField::constant(g, 1.0);
        for p in [0.0, 2.0] {
            let a = u_p(&s, &one, p, 1.0);
            let b = u_p_radial(&r, p).unwrap();
            assert!((a - b).abs() < 5e-3, "{a} {b}");
            let a = v_q(&s, p + 1.0).unwrap();
            let b = v_q_radial(&r, p + 1.0);
            assert!((a - b).abs() < 5e-3, "{a} {b}");
        }
    }
}
