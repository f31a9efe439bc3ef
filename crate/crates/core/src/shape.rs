//! Radial and support-function representations of hypersurfaces.
//!
//! A [`RadialShape`] stores rho on the sphere of directions xi and derives
//! gamma = log rho, omega = sqrt(1 + |D gamma|^2), the support value u = rho / omega
//! and the principal curvatures. A [`SupportShape`] stores u on the sphere of
//! normals x and derives h = D^2 u + u I, its eigenvalues (principal radii),
//! the radial value at the point with normal x, rho = sqrt(u^2 + |Du|^2), and the
//! Gauss curvature K = 1 / det h.

use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{min_max, Jet, ScalarField, SphereGrid};
use crate::math;

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone)]
pub struct SupportShape {
    u: ScalarField,
    jets: Vec<Jet>,
    radii: Vec<[f64; 2]>,
    rho: Vec<f64>,
    det_h: Vec<f64>,
}

/// Builds a support shape, rejecting non-positive u or an indefinite h.
pub fn make_support(u: ScalarField) -> Result<SupportShape> {
    if let Some(node) = u.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            what: "support function",
            node,
            value: u.values()[node],
        });
    }
    let grid = u.grid().clone();
    let jets = u.differentiate();
    let n = grid.dim();
    let mut radii = Vec::with_capacity(u.values().len());
    let mut rho = Vec::with_capacity(u.values().len());
    let mut det_h = Vec::with_capacity(u.values().len());
    for (i, (&ui, j)) in u.values().iter().zip(&jets).enumerate() {
        let lam = if n == 1 {
            let l = j.hess[0] + ui;
            [l, l]
        } else {
            math::sym2_eig(j.hess[0] + ui, j.hess[1], j.hess[2] + ui)
        };
        if !(lam[0] > 0.0) {
            return Err(Error::NonConvex {
                what: "principal radius",
                node: i,
                value: lam[0],
            });
        }
        radii.push(lam);
        rho.push(math::sqrt(ui * ui + j.grad_norm2()));
        det_h.push(if n == 1 { lam[0] } else { lam[0] * lam[1] });
    }
    Ok(SupportShape {
        u,
        jets,
        radii,
        rho,
        det_h,
    })
}

impl SupportShape {
    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.u.grid()
    }
    pub fn dim(&self) -> usize {
        self.grid().dim()
    }
    pub fn support(&self) -> &ScalarField {
        &self.u
    }
    pub fn u(&self) -> &[f64] {
        self.u.values()
    }
    pub fn jets(&self) -> &[Jet] {
        &self.jets
    }
    /// Principal radii at node `i`, ascending.
    pub fn radii(&self, i: usize) -> &[f64] {
        &self.radii[i][..self.dim()]
    }
    /// Radial function evaluated at the point whose normal is the grid node.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
    /// det h = sigma_n(lambda) = 1 / K.
    pub fn det_h(&self) -> &[f64] {
        &self.det_h
    }
    pub fn gauss_curvature(&self, i: usize) -> f64 {
        1.0 / self.det_h[i]
    }
    pub fn min_lambda(&self) -> f64 {
        self.radii.iter().map(|r| r[0]).fold(f64::INFINITY, f64::min)
    }
    /// Largest |Du| / u, which equals |D gamma| at the corresponding point.
    pub fn max_grad_gamma(&self) -> f64 {
        self.u()
            .iter()
            .zip(&self.jets)
            .map(|(u, j)| math::sqrt(j.grad_norm2()) / u)
            .fold(0.0, f64::max)
    }
    /// Extrema of rho over the body (via the reverse Gauss map).
    pub fn rho_range(&self) -> (f64, f64) {
        min_max(&self.rho)
    }
}

#[derive(Debug, Clone)]
pub struct RadialShape {
    rho: ScalarField,
    gamma_jets: Vec<Jet>,
    omega: Vec<f64>,
    u: Vec<f64>,
    kappa: Vec<[f64; 2]>,
}

pub fn make_radial(rho: ScalarField) -> Result<RadialShape> {
    if let Some(node) = rho.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            what: "radial function",
            node,
            value: rho.values()[node],
        });
    }
    let n = rho.grid().dim();
    let gamma: Vec<f64> = rho.values().iter().map(|&r| math::ln(r)).collect();
    let gamma_jets = rho.grid().differentiate(&gamma);
    let len = gamma.len();
    let mut omega = Vec::with_capacity(len);
    let mut u = Vec::with_capacity(len);
    let mut kappa = Vec::with_capacity(len);
    for (&r, j) in rho.values().iter().zip(&gamma_jets) {
        let g2 = j.grad_norm2();
        let w = math::sqrt(1.0 + g2);
        omega.push(w);
        u.push(r / w);
        let scale = 1.0 / (r * w);
        if n == 1 {
            let k = scale * (1.0 - j.hess[0] / (w * w));
            kappa.push([k, k]);
        } else {
            // P^{1/2} = I - c g g^T with c = 1 / (omega (omega + 1)).
            let c = 1.0 / (w * (w + 1.0));
            let [g1, g2v] = j.grad;
            let p = [1.0 - c * g1 * g1, -c * g1 * g2v, 1.0 - c * g2v * g2v];
            let [a, b, d] = j.hess;
            // M = P G P for symmetric 2x2 P = [[p0, p1], [p1, p2]], G = [[a, b], [b, d]].
            let t00 = p[0] * a + p[1] * b;
            let t01 = p[0] * b + p[1] * d;
            let t10 = p[1] * a + p[2] * b;
            let t11 = p[1] * b + p[2] * d;
            let m00 = t00 * p[0] + t01 * p[1];
            let m01 = t00 * p[1] + t01 * p[2];
            let m11 = t10 * p[1] + t11 * p[2];
            let e = math::sym2_eig(scale * (1.0 - m00), -scale * m01, scale * (1.0 - m11));
            kappa.push(e);
        }
    }
    Ok(RadialShape {
        rho,
        gamma_jets,
        omega,
        u,
        kappa,
    })
}

impl RadialShape {
    pub fn grid(&self) -> &Arc<SphereGrid> {
        self.rho.grid()
    }
    pub fn dim(&self) -> usize {
        self.grid().dim()
    }
    pub fn radial(&self) -> &ScalarField {
        &self.rho
    }
    pub fn rho(&self) -> &[f64] {
        self.rho.values()
    }
    pub fn gamma_jets(&self) -> &[Jet] {
        &self.gamma_jets
    }
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
    /// Support value rho / omega at the point in direction xi.
    pub fn u(&self) -> &[f64] {
        &self.u
    }
    /// Principal curvatures at node `i`, ascending.
    pub fn curvatures(&self, i: usize) -> &[f64] {
        &self.kappa[i][..self.dim()]
    }
    pub fn min_curvature(&self) -> (usize, f64) {
        self.kappa
            .iter()
            .enumerate()
            .map(|(i, k)| (i, k[0]))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }
    pub fn max_grad_gamma(&self) -> f64 {
        self.gamma_jets
            .iter()
            .map(|j| math::sqrt(j.grad_norm2()))
            .fold(0.0, f64::max)
    }
    /// Unit outer normal at node `i` in ambient coordinates.
    pub fn normal(&self, i: usize) -> [f64; 3] {
        let g = self.grid();
        let x = g.points()[i];
        let f = g.frame(i);
        let j = &self.gamma_jets[i];
        let w = self.omega[i];
        let mut nu = [0.0; 3];
        for c in 0..3 {
            nu[c] = (x[c] - j.grad[0] * f[0][c] - j.grad[1] * f[1][c]) / w;
        }
        nu
    }
}

/// Smooth interpolant of a grid field: a trigonometric series on S^1, a double
/// Fourier series on the torus double cover (theta extended to [0, 2 pi) through
/// the antipodal reflection) on S^2. Nyquist modes are dropped.
struct Interpolant {
    n: usize,
    /// Complex coefficients, row-major over (theta mode, phi mode).
    coef: Vec<(f64, f64)>,
    modes_t: Vec<i64>,
    modes_p: Vec<i64>,
}

/// Coefficients of modes -(len/2 - 1)..=(len/2 - 1) of `count` sequences stored with
/// element stride `stride`; samples sit at (a + offset) 2 pi / len.
fn dft_axis(
    data: &[(f64, f64)],
    len: usize,
    stride: usize,
    count: usize,
    offset: f64,
) -> Vec<(f64, f64)> {
    let mut out = alloc::vec![(0.0, 0.0); data.len()];
    let h = 2.0 * core::f64::consts::PI / len as f64;
    let half = (len / 2) as i64;
    for c in 0..count {
        for (slot, p) in (-(half - 1)..=(half - 1)).enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for a in 0..len {
                let ang = -(p as f64) * (a as f64 + offset) * h;
                let (s, co) = (math::sin(ang), math::cos(ang));
                let (dr, di) = data[a * stride + c];
                re += dr * co - di * s;
                im += dr * s + di * co;
            }
            out[slot * stride + c] = (re / len as f64, im / len as f64);
        }
    }
    out
}

impl Interpolant {
    fn new(grid: &SphereGrid, values: &[f64]) -> Self {
        let cols = grid.cols();
        let half_p = (cols / 2) as i64;
        let modes_p: Vec<i64> = (-(half_p - 1)..=(half_p - 1)).collect();
        if grid.dim() == 1 {
            let data: Vec<(f64, f64)> = values.iter().map(|&v| (v, 0.0)).collect();
            let mut coef = dft_axis(&data, cols, 1, 1, 0.0);
            coef.truncate(modes_p.len());
            return Self {
                n: 1,
                coef,
                modes_t: alloc::vec![0],
                modes_p,
            };
        }
        let rows = grid.rows();
        let m = 2 * rows;
        let mut stage = alloc::vec![(0.0, 0.0); m * cols];
        for a in 0..m {
            let row: Vec<(f64, f64)> = (0..cols)
                .map(|k| {
                    let v = if a < rows {
                        values[a * cols + k]
                    } else {
                        values[(m - 1 - a) * cols + (k + cols / 2) % cols]
                    };
                    (v, 0.0)
                })
                .collect();
            stage[a * cols..(a + 1) * cols].copy_from_slice(&dft_axis(&row, cols, 1, 1, 0.0));
        }
        let full = dft_axis(&stage, m, cols, cols, 0.5);
        let half_t = (m / 2) as i64;
        let modes_t: Vec<i64> = (-(half_t - 1)..=(half_t - 1)).collect();
        let mut coef = Vec::with_capacity(modes_t.len() * modes_p.len());
        for pt in 0..modes_t.len() {
            for q in 0..modes_p.len() {
                coef.push(full[pt * cols + q]);
            }
        }
        Self {
            n: 2,
            coef,
            modes_t,
            modes_p,
        }
    }

    /// Value at the unit vector `x`.
    fn eval(&self, x: &[f64; 3]) -> f64 {
        let phi = math::atan2(x[1], x[0]);
        let theta = if self.n == 1 {
            0.0
        } else {
            math::atan2(math::sqrt(x[0] * x[0] + x[1] * x[1]), x[2])
        };
        let (sp, cp) = (math::sin(phi), math::cos(phi));
        let (st, ct) = (math::sin(theta), math::cos(theta));
        // e^{i q phi} for the lowest mode, then advanced by multiplication.
        let q0 = self.modes_p[0] as f64;
        let p0 = self.modes_t[0] as f64;
        let np = self.modes_p.len();
        let mut total = 0.0;
        let (mut et_r, mut et_i) = (math::cos(p0 * theta), math::sin(p0 * theta));
        for pt in 0..self.modes_t.len() {
            let (mut ep_r, mut ep_i) = (math::cos(q0 * phi), math::sin(q0 * phi));
            let (mut sr, mut si) = (0.0, 0.0);
            for &(cr, ci) in &self.coef[pt * np..(pt + 1) * np] {
                sr += cr * ep_r - ci * ep_i;
                si += cr * ep_i + ci * ep_r;
                let r = ep_r * cp - ep_i * sp;
                ep_i = ep_r * sp + ep_i * cp;
                ep_r = r;
            }
            total += sr * et_r - si * et_i;
            let r = et_r * ct - et_i * st;
            et_i = et_r * st + et_i * ct;
            et_r = r;
        }
        total
    }
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let r = math::sqrt(dot(&v, &v));
    [v[0] / r, v[1] / r, v[2] / r]
}

fn tangent_frame(n: usize, x: &[f64; 3]) -> [[f64; 3]; 2] {
    if n == 1 {
        return [[-x[1], x[0], 0.0], [0.0; 3]];
    }
    let a = if x[0].abs() < 0.6 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let d = dot(&a, x);
    let t1 = normalize([a[0] - d * x[0], a[1] - d * x[1], a[2] - d * x[2]]);
    let t2 = [
        x[1] * t1[2] - x[2] * t1[1],
        x[2] * t1[0] - x[0] * t1[2],
        x[0] * t1[1] - x[1] * t1[0],
    ];
    [t1, t2]
}

/// Maximizes `g` over the unit sphere (circle for n = 1) by Newton steps with
/// finite-difference derivatives in tangent coordinates, starting at `start`.
fn maximize_on_sphere(
    n: usize,
    start: [f64; 3],
    max_step: f64,
    g: impl Fn(&[f64; 3]) -> f64,
) -> f64 {
    let eps = 1e-4;
    let mut x = start;
    let mut best = g(&x);
    for _ in 0..16 {
        let [t1, t2] = tangent_frame(n, &x);
        let at = |a: f64, b: f64| {
            normalize([
                x[0] + a * t1[0] + b * t2[0],
                x[1] + a * t1[1] + b * t2[1],
                x[2] + a * t1[2] + b * t2[2],
            ])
        };
        let g0 = best;
        let (ga, gma) = (g(&at(eps, 0.0)), g(&at(-eps, 0.0)));
        let da = (ga - gma) / (2.0 * eps);
        let haa = (ga - 2.0 * g0 + gma) / (eps * eps);
        let step = if n == 1 {
            if haa < 0.0 {
                [-da / haa, 0.0]
            } else {
                [da.signum() * max_step, 0.0]
            }
        } else {
            let (gb, gmb) = (g(&at(0.0, eps)), g(&at(0.0, -eps)));
            let (gpp, gmm) = (g(&at(eps, eps)), g(&at(-eps, -eps)));
            let db = (gb - gmb) / (2.0 * eps);
            let hbb = (gb - 2.0 * g0 + gmb) / (eps * eps);
            let hab = (gpp - ga - gb + 2.0 * g0 - gma - gmb + gmm) / (2.0 * eps * eps);
            let det = haa * hbb - hab * hab;
            if haa < 0.0 && det > 0.0 {
                [-(hbb * da - hab * db) / det, -(-hab * da + haa * db) / det]
            } else {
                let norm = math::sqrt(da * da + db * db).max(1e-300);
                [max_step * da / norm, max_step * db / norm]
            }
        };
        let len = math::sqrt(step[0] * step[0] + step[1] * step[1]);
        let scale = if len > max_step { max_step / len } else { 1.0 };
        let cand = at(scale * step[0], scale * step[1]);
        let gc = g(&cand);
        if !(gc > best) {
            break;
        }
        x = cand;
        best = gc;
        if scale * len < 1e-10 {
            break;
        }
    }
    best
}

/// Support function of the body bounded by a convex radial shape,
/// u(x) = max over xi of rho(xi) <x, xi>. rho is replaced by its smooth
/// interpolant so that u is a smooth function of x, and the maximum is located by
/// Newton iteration from the best grid node.
pub fn support_from_radial(r: &RadialShape) -> Result<SupportShape> {
    let (node, kmin) = r.min_curvature();
    if !(kmin > 0.0) {
        return Err(Error::NonConvex {
            what: "principal curvature",
            node,
            value: kmin,
        });
    }
    let grid = r.grid().clone();
    let pts = grid.points();
    let rho = r.rho();
    let interp = Interpolant::new(&grid, rho);
    let step = 2.0 * grid.h_theta().max(grid.h_phi());
    let mut u = Vec::with_capacity(grid.len());
    for x in pts {
        let mut best = (0, f64::NEG_INFINITY);
        for (m, xi) in pts.iter().enumerate() {
            let v = rho[m] * dot(x, xi);
            if v > best.1 {
                best = (m, v);
            }
        }
        u.push(maximize_on_sphere(grid.dim(), pts[best.0], step, |xi| {
            interp.eval(xi) * dot(x, xi)
        }));
    }
    make_support(ScalarField::new(grid, u)?)
}

/// Radial function of the body with support function `s`:
/// rho(xi) = min over x with <x, xi> > 0 of u(x) / <x, xi>, computed like
/// [`support_from_radial`].
pub fn radial_from_support(s: &SupportShape) -> Result<RadialShape> {
    let grid = s.grid().clone();
    let pts = grid.points();
    let u = s.u();
    let interp = Interpolant::new(&grid, u);
    let step = 2.0 * grid.h_theta().max(grid.h_phi());
    let mut rho = Vec::with_capacity(grid.len());
    for xi in pts {
        let mut best = (0, f64::INFINITY);
        for (m, x) in pts.iter().enumerate() {
            let c = dot(xi, x);
            if c > 1e-3 && u[m] / c < best.1 {
                best = (m, u[m] / c);
            }
        }
        rho.push(-maximize_on_sphere(grid.dim(), pts[best.0], step, |x| {
            let c = dot(xi, x);
            if c > 1e-3 {
                -interp.eval(x) / c
            } else {
                f64::NEG_INFINITY
            }
        }));
    }
    make_radial(ScalarField::new(grid, rho)?)
}

/// Support function of the polar body, 1 / rho, as a field on the sphere.
pub fn polar_support(r: &RadialShape) -> ScalarField {
    let v = r.rho().iter().map(|&x| 1.0 / x).collect();
    ScalarField::new(r.grid().clone(), v).expect("reciprocal of a positive field is finite")
}

/// Jacobian of the reverse Gauss map: d xi = u / (rho^{n+1} K) dx.
pub fn jacobian_reverse_gauss(s: &SupportShape) -> ScalarField {
    let n = s.dim() as i32;
    let v = s
        .u()
        .iter()
        .zip(s.rho())
        .zip(s.det_h())
        .map(|((&u, &r), &d)| u * d / math::powi(r, n + 1))
        .collect();
    ScalarField::new(s.grid().clone(), v).expect("jacobian of a valid shape is finite")
}

/// Legendre polynomial P_l(t).
pub fn legendre(l: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let p2 = ((2 * k + 1) as f64 * t * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Declarative initial hypersurfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialShape {
    Sphere {
        radius: f64,
    },
    /// Semi-axes along the coordinate axes; only the first n + 1 are used.
    Ellipsoid {
        axes: Vec<f64>,
    },
    /// rho = radius (1 + epsilon <x, direction>) or radius (1 + epsilon P_l(x_last)).
    RadialPerturbation {
        radius: f64,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        direction: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        zonal_mode: Option<usize>,
    },
}

impl InitialShape {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        match self {
            InitialShape::Sphere { radius } if !(*radius > 0.0) => bad("sphere radius must be positive"),
            InitialShape::Ellipsoid { axes } if axes.len() < n + 1 => {
                bad("ellipsoid needs n + 1 semi-axes")
            }
            InitialShape::Ellipsoid { axes } if axes[..n + 1].iter().any(|a| !(*a > 0.0)) => {
                bad("ellipsoid semi-axes must be positive")
            }
            InitialShape::RadialPerturbation {
                radius,
                epsilon,
                direction,
                zonal_mode,
            } => {
                if !(*radius > 0.0) || !(epsilon.abs() < 1.0) {
                    return bad("perturbation needs radius > 0 and |epsilon| < 1");
                }
                if direction.is_some() == zonal_mode.is_some() {
                    return bad("perturbation needs exactly one of direction or zonal_mode");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn rho_at(&self, n: usize, x: &[f64; 3]) -> f64 {
        match self {
            InitialShape::Sphere { radius } => *radius,
            InitialShape::Ellipsoid { axes } => {
                let s: f64 = (0..=n).map(|c| x[c] * x[c] / (axes[c] * axes[c])).sum();
                1.0 / math::sqrt(s)
            }
            InitialShape::RadialPerturbation {
                radius,
                epsilon,
                direction,
                zonal_mode,
            } => {
                let m = match (direction, zonal_mode) {
                    (Some(e), _) => {
                        let norm = math::sqrt(dot(e, e));
                        dot(x, e) / norm
                    }
                    (None, Some(l)) => legendre(*l, x[n]),
                    (None, None) => 0.0,
                };
                radius * (1.0 + epsilon * m)
            }
        }
    }

    pub fn radial(&self, grid: &Arc<SphereGrid>) -> Result<RadialShape> {
        self.validate(grid.dim())?;
        let n = grid.dim();
        make_radial(ScalarField::from_fn(grid.clone(), |x| self.rho_at(n, x))?)
    }

    pub fn support(&self, grid: &Arc<SphereGrid>) -> Result<SupportShape> {
        self.validate(grid.dim())?;
        let n = grid.dim();
        match self {
            InitialShape::Sphere { radius } => {
                make_support(ScalarField::constant(grid.clone(), *radius))
            }
            InitialShape::Ellipsoid { axes } => make_support(ScalarField::from_fn(grid.clone(), |x| {
                let s: f64 = (0..=n).map(|c| axes[c] * axes[c] * x[c] * x[c]).sum();
                math::sqrt(s)
            })?),
            InitialShape::RadialPerturbation { .. } => support_from_radial(&self.radial(grid)?),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nt: usize) -> Arc<SphereGrid> {
        Arc::new(SphereGrid::sphere(nt, 2 * nt).unwrap())
    }

    #[test]
    fn sphere_support_is_exact() {
        let g = grid(8);
        let s = make_support(ScalarField::constant(g, 2.0)).unwrap();
        for i in 0..s.u().len() {
            assert!((s.radii(i)[0] - 2.0).abs() < 1e-12);
            assert!((s.radii(i)[1] - 2.0).abs() < 1e-12);
            assert!((s.gauss_curvature(i) - 0.25).abs() < 1e-12);
            assert!((s.rho()[i] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn translated_ball_support() {
        let g = grid(16);
        let v = [0.1, -0.2, 0.15];
        let s = make_support(
            ScalarField::from_fn(g, |x| 1.0 + dot(x, &v)).unwrap(),
        )
        .unwrap();
        for i in 0..s.u().len() {
            for &l in s.radii(i) {
                assert!((l - 1.0).abs() < 1e-2, "lambda = {l}");
            }
        }
    }

    #[test]
    fn nonpositive_and_nonconvex_inputs() {
        let g = grid(8);
        let mut v = alloc::vec![1.0; g.len()];
        v[5] = -0.1;
        assert!(matches!(
            make_support(ScalarField::new(g.clone(), v.clone()).unwrap()),
            Err(Error::NonPositive { node: 5, .. })
        ));
        assert!(matches!(
            make_radial(ScalarField::new(g.clone(), v).unwrap()),
            Err(Error::NonPositive { node: 5, .. })
        ));
        let bumpy = ScalarField::from_fn(g, |x| 1.0 + 0.5 * (6.0 * x[0]).cos()).unwrap();
        assert!(matches!(make_support(bumpy), Err(Error::NonConvex { .. })));
    }

    #[test]
    fn sphere_radial_curvatures() {
        let g = grid(8);
        let r = make_radial(ScalarField::constant(g, 4.0)).unwrap();
        for i in 0..r.rho().len() {
            assert!((r.curvatures(i)[0] - 0.25).abs() < 1e-15);
            assert!((r.curvatures(i)[1] - 0.25).abs() < 1e-15);
            assert_eq!(r.omega()[i], 1.0);
        }
    }

    // Gauss curvature of the ellipsoid with semi-axes (a, b, c):
    // at the point P, K = 1 / ((abc)^2 (P1^2/a^4 + P2^2/b^4 + P3^2/c^4)^2);
    // in terms of the normal x, det h = (abc)^2 / u^4.
    #[test]
    fn ellipsoid_curvatures_match_closed_forms() {
        let ax = [1.0, 1.2, 0.8];
        let shape = InitialShape::Ellipsoid { axes: ax.to_vec() };
        let abc2 = (ax[0] * ax[1] * ax[2]) * (ax[0] * ax[1] * ax[2]);
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for nt in [32, 64, 128] {
            let g = grid(nt);
            let r = shape.radial(&g).unwrap();
            let s = shape.support(&g).unwrap();
            let mut ek: f64 = 0.0;
            let mut el: f64 = 0.0;
            for i in 0..g.len() {
                let x = g.points()[i];
                let p = [r.rho()[i] * x[0], r.rho()[i] * x[1], r.rho()[i] * x[2]];
                let q: f64 = (0..3).map(|c| p[c] * p[c] / ax[c].powi(4)).sum();
                let k_exact = 1.0 / (abc2 * q * q);
                let k = r.curvatures(i)[0] * r.curvatures(i)[1];
                ek = ek.max((k - k_exact).abs());
                let d_exact = abc2 / s.u()[i].powi(4);
                el = el.max((s.det_h()[i] - d_exact).abs());
            }
            assert!(ek < prev.0 / 3.5 && el < prev.1 / 3.5, "nt={nt} {ek} {el}");
            prev = (ek, el);
        }
        assert!(prev.0 < 1e-3 && prev.1 < 1e-3);
    }

    #[test]
    fn circle_ellipse_curvature() {
        let g = Arc::new(SphereGrid::circle(256).unwrap());
        let (a, b) = (1.5, 1.0);
        let shape = InitialShape::Ellipsoid { axes: alloc::vec![a, b] };
        let s = shape.support(&g).unwrap();
        let r = shape.radial(&g).unwrap();
        for i in 0..g.len() {
            let x = g.points()[i];
            let u = s.u()[i];
            // Radius of curvature of an ellipse at normal x: (ab)^2 / u^3.
            assert!((s.radii(i)[0] - (a * b).powi(2) / u.powi(3)).abs() < 1e-3);
            let p = [r.rho()[i] * x[0], r.rho()[i] * x[1]];
            let k_exact = 1.0 / ((a * b).powi(2) * (p[0] * p[0] / a.powi(4) + p[1] * p[1] / b.powi(4)).powf(1.5));
            assert!((r.curvatures(i)[0] - k_exact).abs() < 1e-3);
        }
    }

    #[test]
    fn gradient_identity_of_inverse_metric() {
        let g = grid(32);
        let shape = InitialShape::RadialPerturbation {
            radius: 1.0,
            epsilon: 0.2,
            direction: Some([0.3, 0.2, 1.0]),
            zonal_mode: None,
        };
        let r = shape.radial(&g).unwrap();
        let drho = r.radial().differentiate();
        for i in 0..g.len() {
            let rho = r.rho()[i];
            let gj = &r.gamma_jets()[i];
            let w = r.omega()[i];
            // g^{ij} rho_i rho_j with g^{ij} = (delta - gamma_i gamma_j / omega^2) / rho^2.
            let [p1, p2] = drho[i].grad;
            let dot_g = gj.grad[0] * p1 + gj.grad[1] * p2;
            let lhs = ((p1 * p1 + p2 * p2) - dot_g * dot_g / (w * w)) / (rho * rho);
            assert!((lhs - (1.0 - 1.0 / (w * w))).abs() < 1e-3);
        }
    }

    #[test]
    fn support_from_radial_for_ellipsoid_and_translate() {
        let g = grid(32);
        let ell = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.3, 0.9] };
        let exact = ell.support(&g).unwrap();
        let got = support_from_radial(&ell.radial(&g).unwrap()).unwrap();
        let err = exact
            .u()
            .iter()
            .zip(got.u())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "err = {err}");

        // Ball of radius 1 centred at c: rho(xi) = <xi, c> + sqrt(<xi, c>^2 + 1 - |c|^2).
        let c = [0.1, 0.0, -0.2];
        let c2 = dot(&c, &c);
        let rho = ScalarField::from_fn(g.clone(), |x| {
            let d = dot(x, &c);
            d + (d * d + 1.0 - c2).sqrt()
        })
        .unwrap();
        let s = support_from_radial(&make_radial(rho).unwrap()).unwrap();
        for (i, x) in g.points().iter().enumerate() {
            assert!((s.u()[i] - (1.0 + dot(x, &c))).abs() < 1e-3);
        }
    }

    #[test]
    fn nonconvex_star_body_is_rejected() {
        let g = Arc::new(SphereGrid::circle(256).unwrap());
        let rho = ScalarField::from_fn(g.clone(), |x| 1.0 + 0.5 * (4.0 * x[1].atan2(x[0])).cos()).unwrap();
        let r = make_radial(rho).unwrap();
        assert!(r.min_curvature().1 < 0.0);
        assert!(matches!(support_from_radial(&r), Err(Error::NonConvex { .. })));
    }

    #[test]
    fn extrema_and_duality() {
        let g = grid(32);
        let shape = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.2, 1.5] };
        let s = shape.support(&g).unwrap();
        let (umin, umax) = min_max(s.u());
        let (rmin, rmax) = s.rho_range();
        assert!((umax - rmax).abs() < 1e-3);
        assert!(umin <= rmin + 1e-3);
        let r = radial_from_support(&s).unwrap();
        let exact = shape.radial(&g).unwrap();
        for i in 0..g.len() {
            assert!((r.rho()[i] - exact.rho()[i]).abs() < 2e-3);
        }
        // Polar body of the ellipsoid has support 1/rho.
        let polar = polar_support(&exact);
        for i in 0..g.len() {
            assert!((polar.values()[i] * exact.rho()[i] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobian_integrates_to_sphere_area() {
        let mut prev = f64::INFINITY;
        for nt in [16, 32, 64] {
            let s = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.2, 0.8] }
                .support(&grid(nt))
                .unwrap();
            let e = (jacobian_reverse_gauss(&s).integrate() - 4.0 * core::f64::consts::PI).abs();
            assert!(e < prev / 3.0, "nt={nt} {e}");
            prev = e;
        }
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre(0, 0.3), 1.0);
        assert_eq!(legendre(1, 0.3), 0.3);
        assert!((legendre(2, 0.3) - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
    }
}
