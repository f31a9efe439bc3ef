//! Curvature functions f on an open convex cone Gamma containing the positive cone.
//!
//! Supported families: sigma_k^{1/k}, quotients (sigma_l / sigma_k)^{1/(l-k)} and
//! power means (sum x_i^m)^{1/m} with m < 0. A [`CurvatureSpec`] also records whether
//! f is applied to principal curvatures or principal radii, and the speed exponent beta.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Largest tuple length handled by the stack-allocated symmetric-function routines.
pub const MAX_DIM: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Argument {
    PrincipalCurvatures,
    PrincipalRadii,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CurvatureKind {
    SigmaKRoot { k: usize },
    Quotient { l: usize, k: usize },
    PowerMean { m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct CurvatureSpec {
    pub kind: CurvatureKind,
    pub argument: Argument,
    pub beta: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<f64>,
    argument: Argument,
    beta: f64,
}

impl TryFrom<SpecRepr> for CurvatureSpec {
    type Error = String;

    fn try_from(r: SpecRepr) -> core::result::Result<Self, String> {
        let kind = match (r.kind.as_str(), r.k, r.l, r.m) {
            ("sigma_k_root", Some(k), None, None) => CurvatureKind::SigmaKRoot { k },
            ("quotient", Some(k), Some(l), None) => CurvatureKind::Quotient { l, k },
            ("power_mean", None, None, Some(m)) => CurvatureKind::PowerMean { m },
            (kind, ..) => {
                return Err(format!(
                    "curvature kind `{kind}` with parameters k={:?} l={:?} m={:?} is not recognised",
                    r.k, r.l, r.m
                ))
            }
        };
        let spec = CurvatureSpec {
            kind,
            argument: r.argument,
            beta: r.beta,
        };
        spec.check_params().map_err(|e| format!("{e}"))?;
        Ok(spec)
    }
}

impl From<CurvatureSpec> for SpecRepr {
    fn from(s: CurvatureSpec) -> Self {
        let (kind, k, l, m) = match s.kind {
            CurvatureKind::SigmaKRoot { k } => ("sigma_k_root", Some(k), None, None),
            CurvatureKind::Quotient { l, k } => ("quotient", Some(k), Some(l), None),
            CurvatureKind::PowerMean { m } => ("power_mean", None, None, Some(m)),
        };
        SpecRepr {
            kind: kind.into(),
            k,
            l,
            m,
            argument: s.argument,
            beta: s.beta,
        }
    }
}

impl CurvatureSpec {
    pub fn sigma_k_root(k: usize, argument: Argument, beta: f64) -> Result<Self> {
        let s = Self {
            kind: CurvatureKind::SigmaKRoot { k },
            argument,
            beta,
        };
        s.check_params()?;
        Ok(s)
    }

    pub fn quotient(l: usize, k: usize, argument: Argument, beta: f64) -> Result<Self> {
        let s = Self {
            kind: CurvatureKind::Quotient { l, k },
            argument,
            beta,
        };
        s.check_params()?;
        Ok(s)
    }

    pub fn power_mean(m: f64, argument: Argument, beta: f64) -> Result<Self> {
        let s = Self {
            kind: CurvatureKind::PowerMean { m },
            argument,
            beta,
        };
        s.check_params()?;
        Ok(s)
    }

    fn check_params(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidSpec(format!("beta must be positive, got {}", self.beta)));
        }
        match self.kind {
            CurvatureKind::SigmaKRoot { k } if k == 0 => {
                Err(Error::InvalidSpec("sigma_k_root needs k >= 1".into()))
            }
            CurvatureKind::Quotient { l, k } if l <= k => Err(Error::InvalidSpec(format!(
                "quotient needs l > k, got l = {l}, k = {k}"
            ))),
            CurvatureKind::PowerMean { m } if !(m < 0.0 && m.is_finite()) => Err(
                Error::InvalidSpec(format!("power mean needs m < 0, got {m}")),
            ),
            _ => Ok(()),
        }
    }

    /// Checks the parameters against the tuple length n.
    pub fn validate(&self, n: usize) -> Result<()> {
        self.check_params()?;
        if n == 0 || n > MAX_DIM {
            return Err(Error::InvalidSpec(format!("tuple length {n} out of range")));
        }
        let top = match self.kind {
            CurvatureKind::SigmaKRoot { k } => k,
            CurvatureKind::Quotient { l, .. } => l,
            CurvatureKind::PowerMean { .. } => 0,
        };
        if top > n {
            return Err(Error::InvalidSpec(format!(
                "degree {top} exceeds dimension {n}"
            )));
        }
        Ok(())
    }

    /// Membership of the open cone on which f is defined.
    pub fn in_cone(&self, v: &[f64]) -> bool {
        match self.kind {
            CurvatureKind::SigmaKRoot { k } => in_gamma_k(v, k),
            CurvatureKind::Quotient { l, .. } => in_gamma_k(v, l),
            CurvatureKind::PowerMean { .. } => v.iter().all(|&x| x > 0.0),
        }
    }

    /// Distance-like margin to the cone boundary: min_j sigma_j over the defining
    /// inequalities (min entry for the positive cone).
    pub fn cone_margin(&self, v: &[f64]) -> f64 {
        let top = match self.kind {
            CurvatureKind::SigmaKRoot { k } => k,
            CurvatureKind::Quotient { l, .. } => l,
            CurvatureKind::PowerMean { .. } => {
                return v.iter().copied().fold(f64::INFINITY, f64::min)
            }
        };
        let e = elementary(v, top);
        e[1..=top].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// f(v), or `None` outside the cone.
    pub fn eval(&self, v: &[f64]) -> Option<f64> {
        if !self.in_cone(v) {
            return None;
        }
        Some(match self.kind {
            CurvatureKind::SigmaKRoot { k } => root(sigma_k(v, k), k as f64),
            CurvatureKind::Quotient { l, k } => {
                root(sigma_k(v, l) / sigma_k(v, k), (l - k) as f64)
            }
            CurvatureKind::PowerMean { m } => {
                let s: f64 = v.iter().map(|&x| math::powf(x, m)).sum();
                math::powf(s, 1.0 / m)
            }
        })
    }

    /// Gradient of f into `out`, or `None` outside the cone.
    pub fn eval_grad(&self, v: &[f64], out: &mut [f64]) -> Option<f64> {
        let f = self.eval(v)?;
        let n = v.len();
        match self.kind {
            CurvatureKind::SigmaKRoot { k } => {
                let s = sigma_k(v, k);
                sigma_k_grad(v, k, out);
                let c = f / (k as f64 * s);
                out[..n].iter_mut().for_each(|g| *g *= c);
            }
            CurvatureKind::Quotient { l, k } => {
                let (sl, sk) = (sigma_k(v, l), sigma_k(v, k));
                let mut gk = [0.0; MAX_DIM];
                sigma_k_grad(v, l, out);
                sigma_k_grad(v, k, &mut gk);
                let c = f / (l - k) as f64;
                for i in 0..n {
                    out[i] = c * (out[i] / sl - gk[i] / sk);
                }
            }
            CurvatureKind::PowerMean { m } => {
                let s: f64 = v.iter().map(|&x| math::powf(x, m)).sum();
                for i in 0..n {
                    out[i] = math::powf(s, 1.0 / m - 1.0) * math::powf(v[i], m - 1.0);
                }
            }
        }
        Some(f)
    }

    /// f(1, ..., 1) in dimension n.
    pub fn at_unit(&self, n: usize) -> f64 {
        let ones = [1.0; MAX_DIM];
        self.eval(&ones[..n]).unwrap_or(f64::NAN)
    }
}

#[inline]
fn root(x: f64, k: f64) -> f64 {
    if k == 1.0 {
        x
    } else if k == 2.0 {
        math::sqrt(x)
    } else {
        math::powf(x, 1.0 / k)
    }
}

/// Elementary symmetric polynomials sigma_0..=sigma_top of `v`.
fn elementary(v: &[f64], top: usize) -> [f64; MAX_DIM + 1] {
    let mut e = [0.0; MAX_DIM + 1];
    e[0] = 1.0;
    for &x in v {
        for j in (1..=top).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

/// sigma_k(v); sigma_0 = 1 and sigma_k = 0 for k > len.
pub fn sigma_k(v: &[f64], k: usize) -> f64 {
    assert!(v.len() <= MAX_DIM, "tuple longer than {MAX_DIM}");
    if k > v.len() {
        return 0.0;
    }
    elementary(v, k)[k]
}

/// Partial derivatives of sigma_k: out[i] = sigma_{k-1}(v without v_i).
pub fn sigma_k_grad(v: &[f64], k: usize, out: &mut [f64]) {
    let n = v.len();
    assert!(n <= MAX_DIM, "tuple longer than {MAX_DIM}");
    let mut rest = [0.0; MAX_DIM];
    for i in 0..n {
        if k == 0 {
            out[i] = 0.0;
            continue;
        }
        let mut m = 0;
        for (j, &x) in v.iter().enumerate() {
            if j != i {
                rest[m] = x;
                m += 1;
            }
        }
        out[i] = sigma_k(&rest[..m], k - 1);
    }
}

/// Garding cone Gamma_k: sigma_1, ..., sigma_k all positive.
pub fn in_gamma_k(v: &[f64], k: usize) -> bool {
    let e = elementary(v, k.min(v.len()));
    (1..=k.min(v.len())).all(|j| e[j] > 0.0)
}

pub fn f_value(spec: &CurvatureSpec, v: &[f64]) -> Result<f64> {
    spec.eval(v).ok_or(Error::ConeViolation { node: 0 })
}

pub fn f_grad(spec: &CurvatureSpec, v: &[f64]) -> Result<Vec<f64>> {
    let mut out = alloc::vec![0.0; v.len()];
    spec.eval_grad(v, &mut out)
        .ok_or(Error::ConeViolation { node: 0 })?;
    Ok(out)
}

/// Normalizing constant of the curvature-argument flows: f(1, ..., 1)^(-beta).
pub fn eta_kappa(spec: &CurvatureSpec, n: usize) -> f64 {
    math::powf(spec.at_unit(n), -spec.beta)
}

/// Normalizing constant of the radius-argument flows: C(n, k)^(beta / k).
pub fn eta_lambda(n: usize, k: usize, beta: f64) -> f64 {
    math::powf(math::binomial(n, k), beta / k as f64)
}

/// Normalizing constant matching the argument convention of `spec`.
pub fn eta_for(spec: &CurvatureSpec, n: usize) -> f64 {
    match spec.argument {
        Argument::PrincipalCurvatures => eta_kappa(spec, n),
        Argument::PrincipalRadii => math::powf(spec.at_unit(n), spec.beta),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub samples: usize,
    pub max_homogeneity_error: f64,
    pub min_gradient: f64,
    pub max_second_difference: f64,
    pub max_boundary_ratio: f64,
}

/// Randomized check of homogeneity, monotonicity, concavity and boundary decay of f.
pub fn assumption_audit(
    spec: &CurvatureSpec,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<AuditReport> {
    spec.validate(n)?;
    let kind = spec.kind;
    let positive_only = matches!(kind, CurvatureKind::PowerMean { .. });
    audit_function(
        n,
        samples,
        seed,
        positive_only,
        &|v: &[f64]| spec.eval(v),
        &|v: &[f64], out: &mut [f64]| spec.eval_grad(v, out).map(|_| ()),
        &|v: &[f64]| spec.in_cone(v),
    )
}

type EvalFn<'a> = &'a dyn Fn(&[f64]) -> Option<f64>;
type GradFn<'a> = &'a dyn Fn(&[f64], &mut [f64]) -> Option<()>;
type ConeFn<'a> = &'a dyn Fn(&[f64]) -> bool;

/// Audit of an arbitrary function on a cone; `assumption_audit` specialises it.
pub fn audit_function(
    n: usize,
    samples: usize,
    seed: u64,
    positive_only: bool,
    f: EvalFn<'_>,
    grad: GradFn<'_>,
    in_cone: ConeFn<'_>,
) -> Result<AuditReport> {
    if n == 0 || n > MAX_DIM {
        return Err(Error::InvalidSpec(format!("tuple length {n} out of range")));
    }
    let fail = |property: &str, detail: String| {
        Err(Error::InvalidSpec(format!(
            "assumption audit failed: {property} ({detail})"
        )))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AuditReport {
        samples: 0,
        max_homogeneity_error: 0.0,
        min_gradient: f64::INFINITY,
        max_second_difference: f64::NEG_INFINITY,
        max_boundary_ratio: 0.0,
    };
    let mut v = [0.0; MAX_DIM];
    let mut g = [0.0; MAX_DIM];
    let mut w = [0.0; MAX_DIM];
    let mut attempts = 0usize;
    while report.samples < samples {
        attempts += 1;
        if attempts > 100 * samples + 1000 {
            return fail("sampling", "could not draw points inside the cone".into());
        }
        let lo = if positive_only || report.samples.is_multiple_of(2) { 0.05 } else { -1.0 };
        for x in v[..n].iter_mut() {
            *x = rng.gen_range(lo..2.0);
        }
        let v = &v[..n];
        if !in_cone(v) {
            continue;
        }
        report.samples += 1;
        let Some(fv) = f(v) else {
            return fail("definedness", format!("f undefined at {v:?}"));
        };
        if !(fv > 0.0) {
            return fail("positivity", format!("f({v:?}) = {fv}"));
        }

        let t = rng.gen_range(0.1..10.0);
        for i in 0..n {
            w[i] = t * v[i];
        }
        let ft = f(&w[..n]).unwrap_or(f64::NAN);
        let herr = (ft - t * fv).abs() / (t * fv);
        report.max_homogeneity_error = report.max_homogeneity_error.max(herr);
        if !(herr <= 1e-10) {
            return fail("homogeneity", format!("relative error {herr:e} at {v:?}, t = {t}"));
        }

        if grad(v, &mut g[..n]).is_none() {
            return fail("monotonicity", format!("gradient undefined at {v:?}"));
        }
        let gmin = g[..n].iter().copied().fold(f64::INFINITY, f64::min);
        report.min_gradient = report.min_gradient.min(gmin);
        if !(gmin > 0.0) {
            return fail("monotonicity", format!("partial derivative {gmin:e} at {v:?}"));
        }

        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        let mut d = [0.0; MAX_DIM];
        let mut dn = 0.0;
        for x in d[..n].iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
            dn += *x * *x;
        }
        let eps = 1e-3 * norm / math::sqrt(dn);
        let (mut a, mut b) = ([0.0; MAX_DIM], [0.0; MAX_DIM]);
        for i in 0..n {
            a[i] = v[i] + eps * d[i];
            b[i] = v[i] - eps * d[i];
        }
        if let (Some(fa), Some(fb)) = (f(&a[..n]), f(&b[..n])) {
            let sd = fa + fb - 2.0 * fv;
            report.max_second_difference = report.max_second_difference.max(sd);
            if sd > 1e-8 {
                return fail("concavity", format!("second difference {sd:e} at {v:?}"));
            }
        }

        // Walk towards the boundary along -(1, ..., 1).
        let (mut s_in, mut s_out) = (0.0, v.iter().copied().fold(0.0, f64::max) + 1.0);
        for _ in 0..200 {
            let s = 0.5 * (s_in + s_out);
            for i in 0..n {
                w[i] = v[i] - s;
            }
            if in_cone(&w[..n]) {
                s_in = s;
            } else {
                s_out = s;
            }
        }
        for i in 0..n {
            w[i] = v[i] - s_in;
        }
        if let Some(fb) = f(&w[..n]) {
            let ratio = fb / fv;
            report.max_boundary_ratio = report.max_boundary_ratio.max(ratio);
            if ratio > 1e-2 {
                return fail("boundary decay", format!("f ratio {ratio:e} near boundary from {v:?}"));
            }
        }
    }
    Ok(report)
}

#[cfg(any(test, feature = "reference"))]
pub mod reference {
    //! Independent references for validation: subset-enumeration sigma_k and a
    //! Richardson-extrapolated central-difference gradient.

    /// sigma_k by summing over all k-subsets.
    pub fn sigma_k_bruteforce(v: &[f64], k: usize) -> f64 {
        let n = v.len();
        if k == 0 {
            return 1.0;
        }
        if k > n {
            return 0.0;
        }
        let mut total = 0.0;
        for mask in 0u32..(1u32 << n) {
            if mask.count_ones() as usize == k {
                let mut p = 1.0;
                for (i, &x) in v.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        p *= x;
                    }
                }
                total += p;
            }
        }
        total
    }

    /// Central differences at steps h and h/2 combined by Richardson extrapolation.
    pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, v: &[f64], h: f64) -> alloc::vec::Vec<f64> {
        let mut w = v.to_vec();
        let central = |i: usize, h: f64, w: &mut [f64]| {
            let x = w[i];
            w[i] = x + h;
            let a = f(w);
            w[i] = x - h;
            let b = f(w);
            w[i] = x;
            (a - b) / (2.0 * h)
        };
        (0..v.len())
            .map(|i| {
                let d1 = central(i, h, &mut w);
                let d2 = central(i, 0.5 * h, &mut w);
                (4.0 * d2 - d1) / 3.0
            })
            .collect()
    }
}
