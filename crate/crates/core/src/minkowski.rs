//! Stationary Minkowski-type equations on the sphere of normals and a solver that
//! reaches them as limits of normalized flows.
//!
//! With h = D^2 u + u I and rho = sqrt(u^2 + |Du|^2) the equations are
//!
//! * `lp_minkowski`:      det h   = u^(p-1) psi
//! * `lp_cm`:             sigma_k(h) = u^(p-1) psi, 1 <= k < n
//! * `lp_dual_minkowski`: det h   = rho^(n+1-q) u^(p-1) psi
//! * `lp_dual_cm`:        sigma_k(h) = rho^(k+1-q) u^(p-1) psi
//! * `soliton`:           psi u^(alpha-1) rho^delta sigma_k(h)^(beta/k) = eta
//!
//! The solver maps (p, q) to flow exponents of degree k, runs the normalized
//! sigma_k flow (k < n) or the Gauss normalized flow (k = n) and rescales the
//! limit so that the multiplicative constant c0 disappears when p != q.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::curvature::{eta_lambda, sigma_k, Argument, CurvatureSpec};
use crate::error::{Error, Result};
use crate::flow::{Flow, FlowConfig, FlowRecord, PsiSpec, ShapeState, Variant, Verdict};
use crate::functionals::{alpha_delta_from, exponents_from, v_q, QStar};
use crate::grid::{ScalarField, SphereGrid};
use crate::math;
use crate::oracle::CRITICAL_TOL;
use crate::shape::{make_support, InitialShape, SupportShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    LpMinkowski,
    LpCm,
    LpDualMinkowski,
    LpDualCm,
    Soliton,
}

fn default_beta() -> f64 {
    1.0
}

/// Right-hand data of a stationary problem. `beta` is the speed exponent of the
/// flow used to reach it; it fixes the (p, q) -> (alpha, delta) map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub equation: Equation,
    /// Degree of sigma_k; required for `lp_cm` and `lp_dual_cm`, defaults to n for `soliton`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub p: f64,
    /// Required for the dual equations; implied (degree + 1) otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub psi: PsiSpec,
    pub n: usize,
}

impl ProblemSpec {
    pub fn new(equation: Equation, k: Option<usize>, p: f64, q: Option<f64>, n: usize) -> Self {
        Self {
            equation,
            k,
            p,
            q,
            beta: 1.0,
            psi: PsiSpec::default(),
            n,
        }
    }

    /// k for the sigma_k equations and solitons, n for the Gauss-curvature ones.
    pub fn degree(&self) -> usize {
        match self.equation {
            Equation::LpMinkowski | Equation::LpDualMinkowski => self.n,
            _ => self.k.unwrap_or(self.n),
        }
    }

    pub fn q(&self) -> f64 {
        match self.equation {
            Equation::LpMinkowski | Equation::LpCm => self.degree() as f64 + 1.0,
            _ => self.q.unwrap_or(f64::NAN),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.n == 1 || self.n == 2) {
            return bad(format!("n must be 1 or 2, got {}", self.n));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !self.p.is_finite() {
            return bad("p must be finite".into());
        }
        match self.equation {
            Equation::LpCm | Equation::LpDualCm => match self.k {
                Some(k) if k >= 1 && k < self.n => {}
                _ => return bad(format!("{:?} needs 1 <= k <= n - 1", self.equation)),
            },
            Equation::Soliton => {
                if let Some(k) = self.k {
                    if k < 1 || k > self.n {
                        return bad("soliton needs 1 <= k <= n".into());
                    }
                }
            }
            _ => {
                if self.k.is_some_and(|k| k != self.n) {
                    return bad("Gauss-curvature equations imply k = n".into());
                }
            }
        }
        match self.equation {
            Equation::LpMinkowski | Equation::LpCm => {
                if let Some(q) = self.q {
                    if q != self.q() {
                        return bad(format!("q is fixed to {} for {:?}", self.q(), self.equation));
                    }
                }
            }
            _ => match self.q {
                Some(q) if q.is_finite() => {}
                _ => return bad(format!("{:?} needs a finite q", self.equation)),
            },
        }
        self.psi.validate()
    }

    /// (alpha, delta) of the flow with the same degree and beta.
    pub fn flow_exponents(&self) -> Result<(f64, f64)> {
        alpha_delta_from(self.p, self.q(), self.beta, self.degree())
    }

    /// psi of the flow: psi^(-beta/k) for the Minkowski-type equations, psi itself
    /// for solitons.
    pub fn flow_psi(&self) -> PsiSpec {
        if self.equation == Equation::Soliton || self.psi.is_unit() {
            return self.psi.clone();
        }
        PsiSpec::Power {
            base: alloc::boxed::Box::new(self.psi.clone()),
            exponent: -self.beta / self.degree() as f64,
        }
    }

    fn scale_invariant(&self) -> bool {
        (self.p - self.q()).abs() <= CRITICAL_TOL
    }
}

/// sigma_k of the principal radii at node i.
fn lhs_at(shape: &SupportShape, k: usize, i: usize) -> f64 {
    sigma_k(&shape.radii(i)[..shape.dim()], k)
}

/// Pointwise LHS - c0 RHS and sup |LHS - c0 RHS| / (c0 RHS). For solitons the
/// right-hand side is eta and c0 is ignored.
pub fn residual_scaled(shape: &SupportShape, prob: &ProblemSpec, c0: f64) -> Result<(ScalarField, f64)> {
    prob.validate()?;
    let grid = shape.grid().clone();
    if prob.n != shape.dim() {
        return Err(Error::InvalidConfig(format!(
            "problem has n = {} but the shape lives on S^{}",
            prob.n,
            shape.dim()
        )));
    }
    let psi = prob.psi.field(&grid)?;
    let k = prob.degree();
    let mut out = Vec::with_capacity(grid.len());
    let mut sup = 0.0f64;
    if prob.equation == Equation::Soliton {
        let (alpha, delta) = prob.flow_exponents()?;
        let eta = eta_lambda(prob.n, k, prob.beta);
        for i in 0..grid.len() {
            let v = soliton_lhs(shape, psi.values()[i], alpha, delta, prob.beta, k, i);
            out.push(v - eta);
            sup = sup.max((v - eta).abs() / eta);
        }
        return Ok((ScalarField::new(grid, out)?, sup));
    }
    let rho_exp = k as f64 + 1.0 - prob.q();
    for i in 0..grid.len() {
        let (u, rho) = (shape.u()[i], shape.rho()[i]);
        let rhs = c0 * math::powf(rho, rho_exp) * math::powf(u, prob.p - 1.0) * psi.values()[i];
        if !(rhs > 0.0) {
            return Err(Error::NonPositive {
                what: "right-hand side",
                node: i,
                value: rhs,
            });
        }
        let d = lhs_at(shape, k, i) - rhs;
        out.push(d);
        sup = sup.max(d.abs() / rhs);
    }
    Ok((ScalarField::new(grid, out)?, sup))
}

/// Residual of the equation as written (c0 = 1).
pub fn residual(shape: &SupportShape, prob: &ProblemSpec) -> Result<(ScalarField, f64)> {
    residual_scaled(shape, prob, 1.0)
}

fn soliton_lhs(shape: &SupportShape, psi: f64, alpha: f64, delta: f64, beta: f64, k: usize, i: usize) -> f64 {
    let (u, rho) = (shape.u()[i], shape.rho()[i]);
    psi * math::powf(u, alpha - 1.0)
        * math::powf(rho, delta)
        * math::powf(lhs_at(shape, k, i), beta / k as f64)
}

/// sup |psi u^(alpha-1) rho^delta sigma_k^(beta/k) - eta| / eta.
pub fn soliton_residual(
    shape: &SupportShape,
    psi: &ScalarField,
    alpha: f64,
    delta: f64,
    beta: f64,
    k: usize,
    eta: f64,
) -> f64 {
    (0..shape.u().len())
        .map(|i| (soliton_lhs(shape, psi.values()[i], alpha, delta, beta, k, i) - eta).abs() / eta)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definiteness {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiConditionReport {
    /// 1 / (1 + beta - alpha).
    pub exponent: f64,
    /// Smallest eigenvalue over the grid for `Positive`, largest for `Negative`.
    pub extreme_eigenvalue: f64,
    pub node: usize,
    pub pass: bool,
}

/// Definiteness of D^2 w + w I with w = psi^(1/(1+beta-alpha)) at every node.
pub fn check_psi_condition(psi: &ScalarField, alpha: f64, beta: f64, sign: Definiteness) -> Result<PsiConditionReport> {
    let d = 1.0 + beta - alpha;
    if d.abs() < 1e-12 {
        return Err(Error::Domain(format!(
            "psi condition needs 1 + beta - alpha != 0 (alpha = {alpha}, beta = {beta})"
        )));
    }
    if let Some(node) = psi.values().iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositive {
            what: "psi",
            node,
            value: psi.values()[node],
        });
    }
    let exponent = 1.0 / d;
    let grid = psi.grid();
    let w: Vec<f64> = psi.values().iter().map(|&v| math::powf(v, exponent)).collect();
    let jets = grid.differentiate(&w);
    let mut best = match sign {
        Definiteness::Positive => (f64::INFINITY, 0),
        Definiteness::Negative => (f64::NEG_INFINITY, 0),
    };
    for (i, (j, &wi)) in jets.iter().zip(&w).enumerate() {
        let eig = if grid.dim() == 1 {
            let l = j.hess[0] + wi;
            [l, l]
        } else {
            math::sym2_eig(j.hess[0] + wi, j.hess[1], j.hess[2] + wi)
        };
        match sign {
            Definiteness::Positive if eig[0] < best.0 => best = (eig[0], i),
            Definiteness::Negative if eig[1] > best.0 => best = (eig[1], i),
            _ => {}
        }
    }
    let pass = match sign {
        Definiteness::Positive => best.0 > 0.0,
        Definiteness::Negative => best.0 < 0.0,
    };
    Ok(PsiConditionReport {
        exponent,
        extreme_eigenvalue: best.0,
        node: best.1,
        pass,
    })
}

/// Admissible parameter regimes the solver accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// k < n, alpha + delta + beta < 1, alpha <= 0, D^2 w + w I positive definite.
    SigmaKConvexPsi,
    /// k < n, alpha + delta + beta < 1, alpha > 1 + beta, D^2 w + w I negative definite.
    SigmaKConcavePsi,
    /// Soliton with k = n and alpha + delta + beta < 1, any psi.
    SigmaKFullDegree,
    /// Gauss curvature, alpha + delta + beta < 1.
    GaussSubcritical,
    /// Gauss curvature, alpha + delta + beta = 1 (p = q) and alpha != beta/n + 1.
    GaussScaleInvariant,
    /// Gauss curvature, even psi with origin-symmetric data and p >= 0, q <= 0 or
    /// -q* < p < 0. Convergence holds along a sequence of times only.
    GaussEvenPsi,
}

impl Regime {
    pub fn subsequential(self) -> bool {
        self == Regime::GaussEvenPsi
    }

    pub fn describe(self) -> &'static str {
        match self {
            Regime::SigmaKConvexPsi => "sigma_k, s < 1, alpha <= 0, D^2 w + w I > 0",
            Regime::SigmaKConcavePsi => "sigma_k, s < 1, alpha > 1 + beta, D^2 w + w I < 0",
            Regime::SigmaKFullDegree => "sigma_n soliton, s < 1",
            Regime::GaussSubcritical => "Gauss curvature, s < 1",
            Regime::GaussScaleInvariant => "Gauss curvature, s = 1, alpha != beta/n + 1",
            Regime::GaussEvenPsi => "Gauss curvature, even psi, origin-symmetric data",
        }
    }
}

/// Validates the problem against the whitelist of admissible regimes. The error
/// names the hypotheses that fail.
pub fn classify_regime(prob: &ProblemSpec, grid: &Arc<SphereGrid>) -> Result<Regime> {
    prob.validate()?;
    let (alpha, delta) = prob.flow_exponents()?;
    let beta = prob.beta;
    let s = alpha + delta + beta;
    let k = prob.degree();
    let reject = |m: String| Err(Error::RegimeRejected(m));
    let gauss = matches!(prob.equation, Equation::LpMinkowski | Equation::LpDualMinkowski);
    if !gauss {
        if s >= 1.0 - CRITICAL_TOL {
            return reject(format!(
                "sigma_k flows need alpha + delta + beta < 1, got {s} (alpha = {alpha}, delta = {delta}, beta = {beta})"
            ));
        }
        if k == prob.n {
            return if prob.equation == Equation::Soliton {
                Ok(Regime::SigmaKFullDegree)
            } else {
                reject("sigma_k equations need k < n".into())
            };
        }
        let psi = prob.flow_psi().field(grid)?;
        if alpha <= 0.0 {
            let r = check_psi_condition(&psi, alpha, beta, Definiteness::Positive)?;
            if r.pass {
                return Ok(Regime::SigmaKConvexPsi);
            }
            return reject(format!(
                "alpha <= 0 needs D^2 w + w I positive definite for w = psi^{}; smallest eigenvalue {} at node {}",
                r.exponent, r.extreme_eigenvalue, r.node
            ));
        }
        if alpha > 1.0 + beta {
            let r = check_psi_condition(&psi, alpha, beta, Definiteness::Negative)?;
            if r.pass {
                return Ok(Regime::SigmaKConcavePsi);
            }
            return reject(format!(
                "alpha > 1 + beta needs D^2 w + w I negative definite for w = psi^{}; largest eigenvalue {} at node {}",
                r.exponent, r.extreme_eigenvalue, r.node
            ));
        }
        return reject(format!("sigma_k flows need alpha <= 0 or alpha > 1 + beta, got alpha = {alpha}"));
    }
    let (p, q) = (prob.p, prob.q());
    if p.abs() <= CRITICAL_TOL && q.abs() <= CRITICAL_TOL {
        return reject("the Alexandrov case p = q = 0 is not supported".into());
    }
    if s < 1.0 - CRITICAL_TOL {
        return Ok(Regime::GaussSubcritical);
    }
    let nf = prob.n as f64;
    if (s - 1.0).abs() <= CRITICAL_TOL && (alpha - (beta / nf + 1.0)).abs() > CRITICAL_TOL {
        return Ok(Regime::GaussScaleInvariant);
    }
    if !prob.psi.is_even() {
        return reject(format!(
            "alpha + delta + beta = {s} >= 1 outside the scale-invariant case needs an even psi"
        ));
    }
    let q_star = exponents_from(alpha, delta, beta, prob.n)?.q_star;
    let lower_ok = match q_star {
        QStar::Finite(qs) => p > -qs,
        QStar::Infinite | QStar::Undefined => true,
    };
    if p >= 0.0 || q <= 0.0 || (q > 0.0 && p < 0.0 && lower_ok) {
        return Ok(Regime::GaussEvenPsi);
    }
    reject(format!(
        "even psi needs p >= 0, q <= 0 or -q* < p < 0; got p = {p}, q = {q}, q* = {q_star:?}"
    ))
}

fn default_n_theta() -> usize {
    16
}

fn default_n_phi() -> usize {
    32
}

fn default_dt_safety() -> f64 {
    0.4
}

fn default_t_end() -> f64 {
    1e3
}

fn default_max_steps() -> usize {
    2_000_000
}

fn default_tol() -> f64 {
    1e-4
}

/// Numerical settings of a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    #[serde(default = "default_n_phi")]
    pub n_phi: usize,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Bound on the relative residual of the equation at the returned shape.
    #[serde(default = "default_tol")]
    pub stop_residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            n_theta: default_n_theta(),
            n_phi: default_n_phi(),
            dt_safety: default_dt_safety(),
            t_end: default_t_end(),
            max_steps: default_max_steps(),
            stop_residual_tol: default_tol(),
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_residual_tol > 0.0 && self.stop_residual_tol < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_residual_tol must lie in (0, 1), got {}",
                self.stop_residual_tol
            )));
        }
        Ok(())
    }

    pub fn grid(&self, n: usize) -> Result<Arc<SphereGrid>> {
        Ok(Arc::new(SphereGrid::build(n, self.n_theta, self.n_phi)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub equation: Equation,
    pub regime: Regime,
    pub regime_description: String,
    /// Only a sequence of times is known to converge; the last iterate is reported.
    pub subsequential: bool,
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub exponent_sum: f64,
    pub flow: Variant,
    /// Relative residual of the returned shape, re-evaluated from scratch.
    pub residual: f64,
    pub c0: f64,
    /// Dilation applied to the flow limit.
    pub scale: f64,
    pub iterations: usize,
    pub flow_time: f64,
    pub mean_u: f64,
    /// osc u / mean u of the returned shape.
    pub rel_osc_u: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub shape: SupportShape,
    pub report: SolveReport,
    pub history: Vec<FlowRecord>,
}

/// Flow residual bound that guarantees |x^m - 1| <= tol whenever |x - 1| <= result.
fn flow_tolerance(tol: f64, m: f64) -> f64 {
    let up = math::powf(1.0 + tol, 1.0 / m) - 1.0;
    let down = 1.0 - math::powf(1.0 - tol, 1.0 / m);
    up.min(down) * (1.0 - 1e-9)
}

/// Flow configuration that reaches `prob` in the given regime.
pub fn flow_config(prob: &ProblemSpec, opts: &SolveOptions) -> Result<FlowConfig> {
    let (alpha, delta) = prob.flow_exponents()?;
    let k = prob.degree();
    let gauss = matches!(prob.equation, Equation::LpMinkowski | Equation::LpDualMinkowski);
    let variant = if gauss {
        Variant::SupportNormalizedGauss
    } else {
        Variant::SupportNormalizedSigmaK
    };
    let curvature = CurvatureSpec::sigma_k_root(k, Argument::PrincipalRadii, prob.beta)?;
    let mut cfg = FlowConfig::new(variant, alpha, delta, curvature, prob.n);
    cfg.psi = prob.flow_psi();
    cfg.n_theta = opts.n_theta;
    cfg.n_phi = opts.n_phi;
    cfg.dt_safety = opts.dt_safety;
    cfg.t_end = opts.t_end;
    cfg.max_steps = opts.max_steps;
    // Flow residuals are (lhs / rhs)^(beta/k) - 1 for the Minkowski-type equations.
    let m = if prob.equation == Equation::Soliton {
        1.0
    } else {
        k as f64 / prob.beta
    };
    cfg.stop_residual_tol = Some(flow_tolerance(opts.stop_residual_tol, m));
    cfg.validate()?;
    Ok(cfg)
}

fn symmetrize(shape: &SupportShape) -> Result<SupportShape> {
    let grid = shape.grid().clone();
    let u = shape.u();
    let v = (0..u.len()).map(|i| 0.5 * (u[i] + u[grid.antipode(i)])).collect();
    make_support(ScalarField::new(grid, v)?)
}

/// Runs the matching normalized flow from `init` until the equation's residual
/// drops below `opts.stop_residual_tol`.
pub fn solve(prob: &ProblemSpec, init: &InitialShape, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    let cfg = flow_config(prob, opts)?;
    let flow = Flow::new(&cfg)?;
    let regime = classify_regime(prob, flow.grid())?;
    let mut start = flow.initial_state(init)?;
    if regime == Regime::GaussEvenPsi {
        if let ShapeState::Support(s) = &start {
            start = ShapeState::Support(symmetrize(s)?);
        }
    }
    let out = flow.run_from(start)?;
    if out.verdict != Verdict::Converged {
        return Err(Error::NotConverged(format!(
            "{:?} after {} steps at t = {}, flow residual {}",
            out.verdict,
            out.steps,
            out.t,
            out.last().residual
        )));
    }
    let limit = match out.final_state {
        ShapeState::Support(s) => s,
        ShapeState::Radial(_) => unreachable!("support variants evolve support functions"),
    };
    let k = prob.degree();
    let c0 = match cfg.variant {
        Variant::SupportNormalizedGauss => {
            let phi = out.final_phi.unwrap_or(f64::NAN);
            math::powf(phi, -(prob.n as f64) / prob.beta)
        }
        _ if prob.equation == Equation::Soliton => flow.eta(),
        _ => math::powf(flow.eta(), k as f64 / prob.beta),
    };
    let rescale = prob.equation != Equation::Soliton && !prob.scale_invariant();
    let scale = if rescale {
        math::powf(c0, 1.0 / (prob.p - prob.q()))
    } else {
        1.0
    };
    let shape = if scale == 1.0 {
        limit
    } else {
        let v = limit.u().iter().map(|u| u * scale).collect();
        make_support(ScalarField::new(limit.grid().clone(), v)?)?
    };
    let (_, res) = residual_scaled(&shape, prob, if rescale { 1.0 } else { c0 })?;
    let (alpha, delta) = (cfg.alpha, cfg.delta);
    let stats = shape.support().stats();
    let mean_u = shape.support().integrate() / shape.grid().area();
    let report = SolveReport {
        equation: prob.equation,
        regime,
        regime_description: regime.describe().into(),
        subsequential: regime.subsequential(),
        alpha,
        delta,
        beta: prob.beta,
        k,
        p: prob.p,
        q: prob.q(),
        exponent_sum: alpha + delta + prob.beta,
        flow: cfg.variant,
        residual: res,
        c0,
        scale,
        iterations: out.steps,
        flow_time: out.t,
        mean_u,
        rel_osc_u: stats.osc / mean_u,
    };
    Ok(Solution {
        shape,
        report,
        history: out.history,
    })
}

/// Dilation that brings the direction mean of rho^q to one (geometric mean for q = 0).
fn vq_normalizer(shape: &SupportShape, q: f64) -> Result<f64> {
    let v = v_q(shape, q)?;
    Ok(if q.abs() <= crate::functionals::ZERO_TOL {
        math::exp(-v)
    } else {
        math::powf(q * v, -1.0 / q)
    })
}

/// sup |u1 - u2| between the solutions reached from two starts. In the
/// scale-invariant case p = q both limits are first dilated to unit V_q mean.
pub fn uniqueness_probe(
    prob: &ProblemSpec,
    first: &InitialShape,
    second: &InitialShape,
    opts: &SolveOptions,
) -> Result<f64> {
    let a = solve(prob, first, opts)?;
    let b = solve(prob, second, opts)?;
    let (sa, sb) = if prob.equation != Equation::Soliton && prob.scale_invariant() {
        (vq_normalizer(&a.shape, prob.q())?, vq_normalizer(&b.shape, prob.q())?)
    } else {
        (1.0, 1.0)
    };
    Ok(a.shape
        .u()
        .iter()
        .zip(b.shape.u())
        .map(|(x, y)| (x * sa - y * sb).abs())
        .fold(0.0, f64::max))
}
