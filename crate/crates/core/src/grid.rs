//! Discretized unit sphere S^n (n = 1 or 2), quadrature and frame derivatives.
//!
//! For n = 2 the grid is cell-centered in colatitude, theta_j = (j + 1/2) pi / N_theta,
//! and equispaced in longitude, phi_k = 2 pi k / N_phi with N_phi even, so that the
//! antipodal column k + N_phi/2 supplies ghost values across the poles. Nodes are
//! stored row-major by (j, k). For n = 1 the nodes are theta_i = 2 pi i / N.
//!
//! Derivatives are expressed in the orthonormal frame e_1 = d/dtheta,
//! e_2 = (1/sin theta) d/dphi. Longitude differences use trigonometrically fitted
//! denominators, and the first colatitude derivative uses the five-point stencil;
//! together they keep the frame Hessian second-order accurate in the pole rows.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math;

/// Gradient and Hessian of a scalar at a node, in the orthonormal frame.
///
/// `hess` holds (H_11, H_12, H_22). For n = 1 only `grad[0]` and `hess[0]` are used.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

impl Jet {
    #[inline]
    pub fn grad_norm2(&self) -> f64 {
        self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1]
    }
}

#[derive(Debug, Clone)]
pub struct SphereGrid {
    n: usize,
    rows: usize,
    cols: usize,
    h_theta: f64,
    h_phi: f64,
    row_theta: Vec<f64>,
    row_sin: Vec<f64>,
    row_cot: Vec<f64>,
    col_phi: Vec<f64>,
    weights: Vec<f64>,
    points: Vec<[f64; 3]>,
    d1_phi: f64,
    d2_phi: f64,
}

impl SphereGrid {
    /// Builds S^1 with `n_points` nodes.
    pub fn circle(n_points: usize) -> Result<Self> {
        if n_points < 16 {
            return Err(Error::InvalidGrid(alloc::format!(
                "S^1 needs at least 16 points, got {n_points}"
            )));
        }
        let h = 2.0 * PI / n_points as f64;
        let col_phi: Vec<f64> = (0..n_points).map(|i| i as f64 * h).collect();
        let points = col_phi
            .iter()
            .map(|&t| [math::cos(t), math::sin(t), 0.0])
            .collect();
        Ok(Self {
            n: 1,
            rows: 1,
            cols: n_points,
            h_theta: h,
            h_phi: h,
            row_theta: alloc::vec![PI / 2.0],
            row_sin: alloc::vec![1.0],
            row_cot: alloc::vec![0.0],
            col_phi,
            weights: alloc::vec![2.0 * PI / n_points as f64; n_points],
            points,
            d1_phi: 2.0 * math::sin(h),
            d2_phi: 2.0 * (1.0 - math::cos(h)),
        })
    }

    /// Builds S^2 with `n_theta` colatitude rows and `n_phi` longitude columns.
    pub fn sphere(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 8 || n_phi < 16 || !n_phi.is_multiple_of(2) {
            return Err(Error::InvalidGrid(alloc::format!(
                "S^2 needs n_theta >= 8 and even n_phi >= 16, got {n_theta} x {n_phi}"
            )));
        }
        let h_theta = PI / n_theta as f64;
        let h_phi = 2.0 * PI / n_phi as f64;
        let row_theta: Vec<f64> = (0..n_theta).map(|j| (j as f64 + 0.5) * h_theta).collect();
        let row_sin: Vec<f64> = row_theta.iter().map(|&t| math::sin(t)).collect();
        let row_cot: Vec<f64> = row_theta
            .iter()
            .map(|&t| math::cos(t) / math::sin(t))
            .collect();
        let col_phi: Vec<f64> = (0..n_phi).map(|k| k as f64 * h_phi).collect();
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        for j in 0..n_theta {
            let (st, ct) = (row_sin[j], math::cos(row_theta[j]));
            for &p in &col_phi {
                weights.push(st * h_theta * h_phi);
                points.push([st * math::cos(p), st * math::sin(p), ct]);
            }
        }
        let total: f64 = weights.iter().sum();
        let scale = 4.0 * PI / total;
        for w in &mut weights {
            *w *= scale;
        }
        Ok(Self {
            n: 2,
            rows: n_theta,
            cols: n_phi,
            h_theta,
            h_phi,
            row_theta,
            row_sin,
            row_cot,
            col_phi,
            weights,
            points,
            d1_phi: 2.0 * math::sin(h_phi),
            d2_phi: 2.0 * (1.0 - math::cos(h_phi)),
        })
    }

    /// `n = 1` uses `n_theta` as the number of points and ignores `n_phi`.
    pub fn build(n: usize, n_theta: usize, n_phi: usize) -> Result<Self> {
        match n {
            1 => Self::circle(n_theta),
            2 => Self::sphere(n_theta, n_phi),
            _ => Err(Error::InvalidGrid(alloc::format!(
                "only n = 1 and n = 2 are supported, got {n}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// (N_theta, N_phi) for S^2, (N, 1) for S^1.
    pub fn shape(&self) -> (usize, usize) {
        if self.n == 1 {
            (self.cols, 1)
        } else {
            (self.rows, self.cols)
        }
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn h_theta(&self) -> f64 {
        self.h_theta
    }
    pub fn h_phi(&self) -> f64 {
        self.h_phi
    }
    /// Smallest geodesic spacing, used by the time-step rule.
    pub fn h_min(&self) -> f64 {
        if self.n == 1 {
            self.h_theta
        } else {
            self.h_theta.min(self.row_sin[0] * self.h_phi)
        }
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }
    /// Area of the unit sphere S^n.
    pub fn area(&self) -> f64 {
        if self.n == 1 {
            2.0 * PI
        } else {
            4.0 * PI
        }
    }
    /// Spherical coordinates of node `i`: (theta, phi) for S^2, (theta, 0) for S^1.
    pub fn coords(&self, i: usize) -> (f64, f64) {
        if self.n == 1 {
            (self.col_phi[i], 0.0)
        } else {
            (self.row_theta[i / self.cols], self.col_phi[i % self.cols])
        }
    }

    /// Ambient vectors of the frame at node `i` (e_2 is zero for S^1).
    pub fn frame(&self, i: usize) -> [[f64; 3]; 2] {
        if self.n == 1 {
            let t = self.col_phi[i];
            [[-math::sin(t), math::cos(t), 0.0], [0.0; 3]]
        } else {
            let j = i / self.cols;
            let p = self.col_phi[i % self.cols];
            let (st, ct) = (self.row_sin[j], math::cos(self.row_theta[j]));
            let (sp, cp) = (math::sin(p), math::cos(p));
            [[ct * cp, ct * sp, -st], [-sp, cp, 0.0]]
        }
    }

    /// Node index of (row, column) with ghost rows mapped across the poles.
    #[inline]
    fn wrap(&self, j: isize, k: isize) -> usize {
        let rows = self.rows as isize;
        let cols = self.cols as isize;
        let (j, k) = if j < 0 {
            (-1 - j, k + cols / 2)
        } else if j >= rows {
            (2 * rows - 1 - j, k + cols / 2)
        } else {
            (j, k)
        };
        (j * cols + k.rem_euclid(cols)) as usize
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Gradient and Hessian in the orthonormal frame at every node.
    pub fn differentiate(&self, w: &[f64]) -> Vec<Jet> {
        assert_eq!(w.len(), self.len(), "field does not match grid");
        if self.n == 1 {
            return self.differentiate_circle(w);
        }
        let (rows, cols) = (self.rows as isize, self.cols as isize);
        let ht = self.h_theta;
        let mut dt = alloc::vec![0.0; w.len()];
        let mut dtt = alloc::vec![0.0; w.len()];
        for j in 0..rows {
            for k in 0..cols {
                let i = (j * cols + k) as usize;
                let p1 = w[self.wrap(j + 1, k)];
                let m1 = w[self.wrap(j - 1, k)];
                let p2 = w[self.wrap(j + 2, k)];
                let m2 = w[self.wrap(j - 2, k)];
                dt[i] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * ht);
                dtt[i] = (p1 - 2.0 * w[i] + m1) / (ht * ht);
            }
        }
        let mut out = Vec::with_capacity(w.len());
        for j in 0..rows {
            let s = self.row_sin[j as usize];
            let cot = self.row_cot[j as usize];
            for k in 0..cols {
                let i = (j * cols + k) as usize;
                let ip = self.wrap(j, k + 1);
                let im = self.wrap(j, k - 1);
                let wp = (w[ip] - w[im]) / self.d1_phi;
                let wpp = (w[ip] - 2.0 * w[i] + w[im]) / self.d2_phi;
                let wtp = (dt[ip] - dt[im]) / self.d1_phi;
                out.push(Jet {
                    grad: [dt[i], wp / s],
                    hess: [
                        dtt[i],
                        (wtp - cot * wp) / s,
                        wpp / (s * s) + cot * dt[i],
                    ],
                });
            }
        }
        out
    }

    fn differentiate_circle(&self, w: &[f64]) -> Vec<Jet> {
        let n = w.len();
        (0..n)
            .map(|i| {
                let p = w[(i + 1) % n];
                let m = w[(i + n - 1) % n];
                Jet {
                    grad: [(p - m) / self.d1_phi, 0.0],
                    hess: [(p - 2.0 * w[i] + m) / self.d2_phi, 0.0, 0.0],
                }
            })
            .collect()
    }

    /// Index of the node antipodal to `i`.
    pub fn antipode(&self, i: usize) -> usize {
        if self.n == 1 {
            (i + self.cols / 2) % self.cols
        } else {
            let j = i / self.cols;
            let k = i % self.cols;
            (self.rows - 1 - j) * self.cols + (k + self.cols / 2) % self.cols
        }
    }

    /// Neighbour of node `i` offset by (dj, dk) grid steps, ghosts mapped across poles.
    pub fn neighbor(&self, i: usize, dj: isize, dk: isize) -> usize {
        if self.n == 1 {
            let n = self.cols as isize;
            return ((i as isize + dk).rem_euclid(n)) as usize;
        }
        let j = (i / self.cols) as isize;
        let k = (i % self.cols) as isize;
        self.wrap(j + dj, k + dk)
    }
}

/// A real-valued field on a grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<SphereGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<SphereGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "field value",
                node,
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<SphereGrid>, c: f64) -> Self {
        let values = alloc::vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Arc<SphereGrid>, f: impl Fn(&[f64; 3]) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(f).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
    pub fn differentiate(&self) -> Vec<Jet> {
        self.grid.differentiate(&self.values)
    }
    pub fn stats(&self) -> FieldStats {
        field_stats(self)
    }
}

/// Summary statistics of a field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub osc: f64,
    pub max_grad: f64,
}

pub fn field_stats(field: &ScalarField) -> FieldStats {
    let (min, max) = min_max(field.values());
    let max_grad = field
        .differentiate()
        .iter()
        .map(|j| math::sqrt(j.grad_norm2()))
        .fold(0.0, f64::max);
    FieldStats {
        min,
        max,
        osc: max - min,
        max_grad,
    }
}

pub fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(nt: usize) -> SphereGrid {
        SphereGrid::sphere(nt, 2 * nt).unwrap()
    }

    fn max_err(grid: &SphereGrid, f: impl Fn(&[f64; 3]) -> f64, exact: impl Fn(usize) -> Jet) -> f64 {
        let w: Vec<f64> = grid.points().iter().map(f).collect();
        let jets = grid.differentiate(&w);
        let mut err: f64 = 0.0;
        for (i, j) in jets.iter().enumerate() {
            let e = exact(i);
            for a in 0..2 {
                err = err.max((j.grad[a] - e.grad[a]).abs());
            }
            for a in 0..3 {
                err = err.max((j.hess[a] - e.hess[a]).abs());
            }
        }
        err
    }

    #[test]
    fn rejects_small_or_odd_grids() {
        assert!(SphereGrid::sphere(4, 16).is_err());
        assert!(SphereGrid::sphere(8, 17).is_err());
        assert!(SphereGrid::circle(8).is_err());
        assert!(SphereGrid::build(3, 8, 16).is_err());
    }

    #[test]
    fn weights_sum_to_area() {
        for nt in [8, 16, 32] {
            let g = sphere(nt);
            assert!((g.weights().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
        }
        let c = SphereGrid::circle(64).unwrap();
        assert!((c.weights().iter().sum::<f64>() - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn quadrature_of_cos_squared() {
        let mut prev = f64::INFINITY;
        for nt in [16, 32, 64] {
            let g = sphere(nt);
            let v: Vec<f64> = g.points().iter().map(|p| p[2] * p[2]).collect();
            let err = (g.integrate(&v) - 4.0 * PI / 3.0).abs();
            assert!(err < prev / 3.5, "nt={nt} err={err}");
            prev = err;
        }
    }

    #[test]
    fn circle_second_derivative() {
        let mut prev = f64::INFINITY;
        for n in [32, 64, 128] {
            let g = SphereGrid::circle(n).unwrap();
            let w: Vec<f64> = (0..n).map(|i| (3.0 * g.coords(i).0).cos()).collect();
            let jets = g.differentiate(&w);
            let err = (0..n)
                .map(|i| {
                    let t = g.coords(i).0;
                    let exact = -9.0 * (3.0 * t).cos();
                    (jets[i].hess[0] - exact).abs()
                })
                .fold(0.0, f64::max);
            assert!(err < prev / 3.5, "n={n} err={err} prev={prev}");
            prev = err;
        }
    }

    // Exact frame Hessian of the restriction of a linear function <x, v>: -<x, v> I.
    #[test]
    fn linear_functions_are_nearly_exact() {
        let g = sphere(16);
        let v = [0.3, -0.7, 0.5];
        let err = max_err(
            &g,
            |p| p[0] * v[0] + p[1] * v[1] + p[2] * v[2],
            |i| {
                let p = g.points()[i];
                let f = g.frame(i);
                let lin = p[0] * v[0] + p[1] * v[1] + p[2] * v[2];
                let d = |e: [f64; 3]| e[0] * v[0] + e[1] * v[1] + e[2] * v[2];
                Jet {
                    grad: [d(f[0]), d(f[1])],
                    hess: [-lin, 0.0, -lin],
                }
            },
        );
        assert!(err < 5e-3, "err={err}");
    }

    // Hessian of the restriction of a quadratic form x^T A x in the frame:
    // H(e_a, e_b) = 2 e_a^T A e_b - 2 (x^T A x) delta_ab.
    #[test]
    fn quadratic_forms_converge_at_second_order_everywhere() {
        let a = [[1.0, 0.4, -0.3], [0.4, -0.5, 0.2], [-0.3, 0.2, 0.8]];
        let form = |x: &[f64; 3], y: &[f64; 3]| {
            let mut s = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    s += x[r] * a[r][c] * y[c];
                }
            }
            s
        };
        let mut prev = f64::INFINITY;
        for nt in [16, 32, 64] {
            let g = sphere(nt);
            let err = max_err(
                &g,
                |p| form(p, p) + (p[0] + 2.0 * p[2]).sin(),
                |i| {
                    let p = g.points()[i];
                    let f = g.frame(i);
                    let q = form(&p, &p);
                    let s = p[0] + 2.0 * p[2];
                    let ds = |e: [f64; 3]| e[0] + 2.0 * e[2];
                    // Hessian of sin(<x,c>) restricted: -sin(s) ds_a ds_b - cos(s) s delta_ab.
                    let sh = |x: [f64; 3], y: [f64; 3]| -s.sin() * ds(x) * ds(y);
                    Jet {
                        grad: [
                            2.0 * form(&f[0], &p) + s.cos() * ds(f[0]),
                            2.0 * form(&f[1], &p) + s.cos() * ds(f[1]),
                        ],
                        hess: [
                            2.0 * form(&f[0], &f[0]) - 2.0 * q + sh(f[0], f[0]) - s.cos() * s,
                            2.0 * form(&f[0], &f[1]) + sh(f[0], f[1]),
                            2.0 * form(&f[1], &f[1]) - 2.0 * q + sh(f[1], f[1]) - s.cos() * s,
                        ],
                    }
                },
            );
            assert!(err < prev / 3.5, "nt={nt} err={err} prev={prev}");
            prev = err;
        }
    }

    #[test]
    fn stats_of_constant_field() {
        let g = Arc::new(sphere(8));
        let f = ScalarField::constant(g, 2.5);
        let s = f.stats();
        assert_eq!((s.min, s.max, s.osc, s.max_grad), (2.5, 2.5, 0.0, 0.0));
    }

    #[test]
    fn antipodes() {
        let g = sphere(8);
        for i in 0..g.len() {
            let a = g.points()[g.antipode(i)];
            let p = g.points()[i];
            for c in 0..3 {
                assert!((a[c] + p[c]).abs() < 1e-12);
            }
        }
    }
}
