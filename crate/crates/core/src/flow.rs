//! Time stepping of the original expanding flow and its normalizations.
//!
//! Radial variants evolve rho on the sphere of directions, support variants evolve u
//! on the sphere of normals. Every step is an explicit midpoint (RK2) update with the
//! parabolic time step dt = dt_safety h_min^2 / (n c_max), where c_max bounds the
//! derivative of the speed with respect to the Hessian of the evolving function.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{boxed::Box, format};

use serde::{Deserialize, Serialize};

use crate::curvature::{eta_for, Argument, CurvatureKind, CurvatureSpec, MAX_DIM};
use crate::error::{Error, Result};
use crate::functionals::{exponents_from, stationarity_gap, u_p, u_p_radial, v_q, v_q_radial, Exponents};
use crate::grid::{min_max, ScalarField, SphereGrid};
use crate::math;
use crate::oracle::{spherical_tstar, CRITICAL_TOL};
use crate::shape::{make_radial, make_support, InitialShape, RadialShape, SupportShape};

/// Upper bound on stored history rows.
pub const MAX_HISTORY: usize = 10_000;
/// Blow-up is declared once min rho exceeds this multiple of the initial max rho.
pub const BLOWUP_FACTOR: f64 = 1e3;
/// The blow-up time is fitted over min rho in [FIT_LO, BLOWUP_FACTOR] x initial max rho.
pub const FIT_LO: f64 = 10.0;
/// Margin of the initial dilation of sigma_k normalized flows: min Q(0) >= margin eta.
pub const PREDILATION_MARGIN: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    RadialOriginal,
    RadialNormalized,
    SupportOriginal,
    SupportNormalizedSigmaK,
    SupportNormalizedGauss,
}

impl Variant {
    pub fn is_radial(self) -> bool {
        matches!(self, Variant::RadialOriginal | Variant::RadialNormalized)
    }
    pub fn is_normalized(self) -> bool {
        !matches!(self, Variant::RadialOriginal | Variant::SupportOriginal)
    }
    /// The unnormalized flow with the same speed.
    pub fn original(self) -> Variant {
        if self.is_radial() {
            Variant::RadialOriginal
        } else {
            Variant::SupportOriginal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiTerm {
    pub direction: [f64; 3],
    pub coeff: f64,
}

/// Anisotropy psi on the sphere of normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiSpec {
    Constant { value: f64 },
    /// c0 + sum of coeff <x, direction>^2 over at most three directions.
    Quadratic { c0: f64, terms: Vec<PsiTerm> },
    /// base^exponent.
    Power { base: Box<PsiSpec>, exponent: f64 },
}

impl Default for PsiSpec {
    fn default() -> Self {
        PsiSpec::Constant { value: 1.0 }
    }
}

impl PsiSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            PsiSpec::Constant { value } if !(*value > 0.0 && value.is_finite()) => Err(
                Error::InvalidConfig(format!("constant psi must be positive, got {value}")),
            ),
            PsiSpec::Quadratic { c0, terms } => {
                if terms.len() > 3 {
                    return Err(Error::InvalidConfig("quadratic psi takes at most 3 terms".into()));
                }
                let bad = !c0.is_finite()
                    || terms.iter().any(|t| {
                        !t.coeff.is_finite()
                            || t.direction.iter().any(|d| !d.is_finite())
                            || norm(&t.direction) == 0.0
                    });
                if bad {
                    return Err(Error::InvalidConfig(
                        "quadratic psi needs finite coefficients and nonzero directions".into(),
                    ));
                }
                Ok(())
            }
            PsiSpec::Power { base, exponent } => {
                if !exponent.is_finite() {
                    return Err(Error::InvalidConfig("psi exponent must be finite".into()));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        match self {
            PsiSpec::Constant { value } => *value,
            PsiSpec::Quadratic { c0, terms } => {
                c0 + terms
                    .iter()
                    .map(|t| {
                        let d = dot(x, &t.direction) / norm(&t.direction);
                        t.coeff * d * d
                    })
                    .sum::<f64>()
            }
            PsiSpec::Power { base, exponent } => math::powf(base.eval(x), *exponent),
        }
    }

    /// Samples psi on the grid, requiring positivity at every node.
    pub fn field(&self, grid: &Arc<SphereGrid>) -> Result<ScalarField> {
        self.validate()?;
        let f = ScalarField::from_fn(grid.clone(), |x| self.eval(x))?;
        if let Some(node) = f.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::NonPositive {
                what: "psi",
                node,
                value: f.values()[node],
            });
        }
        Ok(f)
    }

    pub fn is_unit(&self) -> bool {
        match self {
            PsiSpec::Constant { value } => *value == 1.0,
            PsiSpec::Quadratic { c0, terms } => *c0 == 1.0 && terms.iter().all(|t| t.coeff == 0.0),
            PsiSpec::Power { base, .. } => base.is_unit(),
        }
    }

    /// True when psi(-x) = psi(x) by construction.
    pub fn is_even(&self) -> bool {
        match self {
            PsiSpec::Constant { .. } | PsiSpec::Quadratic { .. } => true,
            PsiSpec::Power { base, .. } => base.is_even(),
        }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    math::sqrt(dot(a, a))
}

fn default_dt_safety() -> f64 {
    0.4
}

/// Everything a flow run needs besides the initial shape. beta is carried by the
/// curvature spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub delta: f64,
    pub curvature: CurvatureSpec,
    #[serde(default)]
    pub psi: PsiSpec,
    pub n: usize,
    /// Colatitude rows for S^2, number of points for S^1.
    pub n_theta: usize,
    #[serde(default)]
    pub n_phi: usize,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
    /// Fixed time step instead of the parabolic rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_override: Option<f64>,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_osc_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_residual_tol: Option<f64>,
    pub max_steps: usize,
    /// Blow-up time used to normalize supercritical flows; fitted from an original
    /// run when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<f64>,
}

impl FlowConfig {
    /// A config with default stepping parameters and no stopping tolerances.
    pub fn new(variant: Variant, alpha: f64, delta: f64, curvature: CurvatureSpec, n: usize) -> Self {
        let (n_theta, n_phi) = if n == 1 { (64, 0) } else { (16, 32) };
        Self {
            variant,
            alpha,
            delta,
            curvature,
            psi: PsiSpec::default(),
            n,
            n_theta,
            n_phi,
            dt_safety: default_dt_safety(),
            dt_override: None,
            t_end: 1.0,
            stop_osc_tol: None,
            stop_residual_tol: None,
            max_steps: 1_000_000,
            t_star: None,
        }
    }

    pub fn beta(&self) -> f64 {
        self.curvature.beta
    }

    /// alpha + delta + beta.
    pub fn exponent_sum(&self) -> f64 {
        self.alpha + self.delta + self.beta()
    }

    pub fn eta(&self) -> f64 {
        eta_for(&self.curvature, self.n)
    }

    pub fn exponents(&self) -> Result<Exponents> {
        exponents_from(self.alpha, self.delta, self.beta(), self.n)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.n == 1 || self.n == 2) {
            return bad(format!("n must be 1 or 2, got {}", self.n));
        }
        self.curvature.validate(self.n)?;
        if !self.alpha.is_finite() || !self.delta.is_finite() {
            return bad("alpha and delta must be finite".into());
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return bad(format!("dt_safety must lie in (0, 1], got {}", self.dt_safety));
        }
        if let Some(dt) = self.dt_override {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt_override must be positive, got {dt}"));
            }
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive and finite, got {}", self.t_end));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        for (name, tol) in [
            ("stop_osc_tol", self.stop_osc_tol),
            ("stop_residual_tol", self.stop_residual_tol),
            ("t_star", self.t_star),
        ] {
            if let Some(v) = tol {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        self.psi.validate()?;
        if self.variant.is_radial() && !self.psi.is_unit() {
            return bad("radial variants require psi = 1".into());
        }
        if self.variant == Variant::SupportNormalizedGauss {
            match self.curvature.kind {
                CurvatureKind::SigmaKRoot { k } if k == self.n => {}
                _ => return bad("the Gauss normalized flow needs sigma_k_root with k = n".into()),
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<SphereGrid>> {
        Ok(Arc::new(SphereGrid::build(self.n, self.n_theta, self.n_phi)?))
    }
}

/// A hypersurface in the representation a variant evolves.
#[derive(Debug, Clone)]
pub enum ShapeState {
    Radial(RadialShape),
    Support(SupportShape),
}

impl ShapeState {
    pub fn grid(&self) -> &Arc<SphereGrid> {
        match self {
            ShapeState::Radial(r) => r.grid(),
            ShapeState::Support(s) => s.grid(),
        }
    }
    /// The evolving function: rho or u.
    pub fn values(&self) -> &[f64] {
        match self {
            ShapeState::Radial(r) => r.rho(),
            ShapeState::Support(s) => s.u(),
        }
    }
    /// Radial values (through the reverse Gauss map for support shapes).
    pub fn rho(&self) -> &[f64] {
        match self {
            ShapeState::Radial(r) => r.rho(),
            ShapeState::Support(s) => s.rho(),
        }
    }
    pub fn max_grad_gamma(&self) -> f64 {
        match self {
            ShapeState::Radial(r) => r.max_grad_gamma(),
            ShapeState::Support(s) => s.max_grad_gamma(),
        }
    }
    fn rebuild(&self, values: Vec<f64>) -> Result<ShapeState> {
        let f = ScalarField::new(self.grid().clone(), values)?;
        Ok(match self {
            ShapeState::Radial(_) => ShapeState::Radial(make_radial(f)?),
            ShapeState::Support(_) => ShapeState::Support(make_support(f)?),
        })
    }
    /// The same shape dilated by `c`.
    pub fn scaled(&self, c: f64) -> Result<ShapeState> {
        self.rebuild(self.values().iter().map(|v| v * c).collect())
    }
}

/// One diagnostic row per recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub t: f64,
    pub tau: f64,
    pub dt: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub osc_rho: f64,
    pub max_grad_gamma: f64,
    pub min_lambda: f64,
    pub eta: f64,
    pub phi: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub u_p: f64,
    pub v_q: f64,
    pub j_pq: f64,
    pub residual: f64,
}

impl FlowRecord {
    pub const HEADER: [&'static str; 17] = [
        "step",
        "t",
        "tau",
        "dt",
        "min_rho",
        "max_rho",
        "osc_rho",
        "max_grad_gamma",
        "min_lambda",
        "eta",
        "phi",
        "q_min",
        "q_max",
        "u_p",
        "v_q",
        "j_pq",
        "residual",
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Converged,
    BlownUp,
    TEndReached,
    MaxStepsReached,
}

/// Step-by-step checks of the monotone quantities, taken over every accepted step
/// (not only the stored rows). Increases are 0 when none occurred.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Monitors {
    /// max over steps of (J_{i+1} - J_i) / (1 + |J_i|).
    pub j_increase: f64,
    /// max over steps of |V_q(t) - V_q(0)| / |V_q(0)|.
    pub v_q_drift: f64,
    /// max over steps of (max(Q_max, eta)_{i+1} - max(Q_max, eta)_i) / eta.
    pub barrier_max_rise: f64,
    /// max over steps of (min(Q_min, eta)_i - min(Q_min, eta)_{i+1}) / eta.
    pub barrier_min_drop: f64,
    /// max over steps of the increase of the stationarity gap (Gauss flow only).
    pub gap_rise: f64,
}

#[derive(Debug, Clone)]
pub struct FlowOutcome {
    pub final_state: ShapeState,
    pub history: Vec<FlowRecord>,
    pub verdict: Verdict,
    pub steps: usize,
    pub t: f64,
    /// Blow-up time fitted from min rho, for blown-up original runs.
    pub t_star_fit: Option<f64>,
    /// Blow-up time used to normalize a supercritical normalized run.
    pub t_star_used: Option<f64>,
    /// Dilation applied to the initial data before the run.
    pub initial_scale: f64,
    /// phi of the Gauss normalized flow at the final state.
    pub final_phi: Option<f64>,
    pub monitors: Monitors,
}

impl FlowOutcome {
    pub fn last(&self) -> &FlowRecord {
        self.history.last().expect("history always holds the final row")
    }
}

/// Normalization factor of the original flow with initial radius rho0.
pub fn phi_schedule(t: f64, alpha: f64, delta: f64, beta: f64, eta: f64, rho0: f64) -> Result<f64> {
    let s = alpha + delta + beta;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if (s - 1.0).abs() <= CRITICAL_TOL {
        Ok(math::exp(eta * t))
    } else if s < 1.0 {
        let base = 1.0 + (1.0 - s) * eta * t;
        Ok(math::powf(base, 1.0 / (1.0 - s)))
    } else {
        let ts = blowup_time(rho0, alpha, delta, beta, eta)?;
        phi_supercritical(t, s, eta, ts)
    }
}

fn phi_supercritical(t: f64, s: f64, eta: f64, t_star: f64) -> Result<f64> {
    if t >= t_star {
        return Err(Error::Domain(format!("t = {t} is not before the blow-up time {t_star}")));
    }
    Ok(math::powf((s - 1.0) * eta * (t_star - t), 1.0 / (1.0 - s)))
}

/// Normalized time of the original time t; `t_star` is required when
/// alpha + delta + beta > 1.
pub fn tau_of_t(t: f64, alpha: f64, delta: f64, beta: f64, eta: f64, t_star: Option<f64>) -> Result<f64> {
    let s = alpha + delta + beta;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if (s - 1.0).abs() <= CRITICAL_TOL {
        Ok(t)
    } else if s < 1.0 {
        Ok(math::ln((1.0 - s) * eta * t + 1.0) / ((1.0 - s) * eta))
    } else {
        let ts = t_star.ok_or_else(|| {
            Error::Domain("the supercritical branch needs the blow-up time".into())
        })?;
        if t >= ts {
            return Err(Error::Domain(format!("t = {t} is not before the blow-up time {ts}")));
        }
        Ok(math::ln((ts - t) / ts) / ((1.0 - s) * eta))
    }
}

/// Blow-up time of the sphere of radius rho0.
pub fn blowup_time(rho0: f64, alpha: f64, delta: f64, beta: f64, eta: f64) -> Result<f64> {
    spherical_tstar(rho0, alpha, delta, beta, eta)
}

/// Speed factor G and the largest |dG/dv_j| at one node, for a tuple `v` of
/// principal curvatures (`curv = true`) or principal radii.
fn speed_factor(spec: &CurvatureSpec, v: &[f64], curv: bool, node: usize) -> Result<(f64, f64)> {
    let n = v.len();
    let beta = spec.beta;
    let want_curv = spec.argument == Argument::PrincipalCurvatures;
    let mut x = [0.0; MAX_DIM];
    for j in 0..n {
        x[j] = if curv == want_curv { v[j] } else { 1.0 / v[j] };
        if curv != want_curv && !(v[j] > 0.0) {
            return Err(Error::ConeViolation { node });
        }
    }
    let mut grad = [0.0; MAX_DIM];
    let f = spec
        .eval_grad(&x[..n], &mut grad)
        .filter(|f| *f > 0.0)
        .ok_or(Error::ConeViolation { node })?;
    // G = f^{-beta} on curvatures, f^{beta} on radii.
    let e = if want_curv { -beta } else { beta };
    let g = math::powf(f, e);
    let mut dmax: f64 = 0.0;
    for j in 0..n {
        let mut d = e * g / f * grad[j];
        if curv != want_curv {
            d /= v[j] * v[j];
        }
        dmax = dmax.max(d.abs());
    }
    Ok((g, dmax))
}

/// Right-hand side and per-node diagnostics of one state.
#[derive(Debug, Clone)]
struct Eval {
    rhs: Vec<f64>,
    /// speed / u (without phi for the Gauss flow).
    q: Vec<f64>,
    coef: f64,
    /// Smallest cone margin of the curvature tuples (radial) or smallest radius.
    margin: f64,
    /// phi of the Gauss normalized flow, 1 otherwise.
    phi: f64,
}

/// A configured flow: grid, psi samples and the constants of the variant.
pub struct Flow<'a> {
    cfg: FlowConfig,
    grid: Arc<SphereGrid>,
    psi: ScalarField,
    eta: f64,
    exps: Exponents,
    hook: Option<&'a dyn Fn(usize, &mut [f64])>,
    observer: Option<&'a dyn Fn(&FlowRecord, &ShapeState)>,
}

impl<'a> Flow<'a> {
    pub fn new(cfg: &FlowConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let psi = cfg.psi.field(&grid)?;
        Ok(Self {
            eta: cfg.eta(),
            exps: cfg.exponents()?,
            cfg: cfg.clone(),
            grid,
            psi,
            hook: None,
            observer: None,
        })
    }

    /// Installs a callback that may modify every right-hand side before it is used
    /// (arguments: step index, rhs values). Used for fault injection.
    pub fn with_rhs_hook(mut self, hook: &'a dyn Fn(usize, &mut [f64])) -> Self {
        self.hook = Some(hook);
        self
    }

    /// Installs a callback that sees the record and state of every step of the
    /// main run (not of a calibration run).
    pub fn with_observer(mut self, observer: &'a dyn Fn(&FlowRecord, &ShapeState)) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }
    pub fn grid(&self) -> &Arc<SphereGrid> {
        &self.grid
    }
    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Samples the initial shape in the representation of the variant.
    pub fn initial_state(&self, init: &InitialShape) -> Result<ShapeState> {
        init.validate(self.cfg.n)?;
        Ok(if self.cfg.variant.is_radial() {
            ShapeState::Radial(init.radial(&self.grid)?)
        } else {
            ShapeState::Support(init.support(&self.grid)?)
        })
    }

    fn check_state(&self, state: &ShapeState) -> Result<()> {
        let radial = matches!(state, ShapeState::Radial(_));
        if radial != self.cfg.variant.is_radial() {
            return Err(Error::InvalidConfig(
                "state representation does not match the flow variant".into(),
            ));
        }
        if !Arc::ptr_eq(state.grid(), &self.grid) && state.grid().len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: state.grid().len(),
            });
        }
        Ok(())
    }

    fn eval_radial(&self, r: &RadialShape) -> Result<Eval> {
        let (alpha, delta) = (self.cfg.alpha, self.cfg.delta);
        let normalized = self.cfg.variant.is_normalized();
        let len = r.rho().len();
        let (mut rhs, mut q) = (Vec::with_capacity(len), Vec::with_capacity(len));
        let (mut coef, mut margin) = (0.0f64, f64::INFINITY);
        for i in 0..len {
            let kappa = r.curvatures(i);
            let (g, dg) = speed_factor(&self.cfg.curvature, kappa, true, i)?;
            margin = margin.min(self.cfg.curvature.cone_margin(kappa));
            let (rho, u, w) = (r.rho()[i], r.u()[i], r.omega()[i]);
            let pre = math::powf(u, alpha) * math::powf(rho, delta);
            let speed = pre * g;
            q.push(speed / u);
            rhs.push(if normalized { (speed - self.eta * u) * w } else { speed * w });
            coef = coef.max(pre * dg / (rho * rho));
        }
        Ok(Eval {
            rhs,
            q,
            coef,
            margin,
            phi: 1.0,
        })
    }

    fn eval_support(&self, s: &SupportShape) -> Result<Eval> {
        let (alpha, delta) = (self.cfg.alpha, self.cfg.delta);
        let n = s.dim();
        let len = s.u().len();
        let gauss = self.cfg.variant == Variant::SupportNormalizedGauss;
        let phi = if gauss { phi_integral(s, &self.psi, &self.cfg)? } else { 1.0 };
        let (mut rhs, mut q) = (Vec::with_capacity(len), Vec::with_capacity(len));
        let mut coef = 0.0f64;
        for i in 0..len {
            let lam = s.radii(i);
            let (u, rho) = (s.u()[i], s.rho()[i]);
            let pre = self.psi.values()[i] * math::powf(u, alpha) * math::powf(rho, delta);
            let (g, dg) = if gauss {
                let g = math::powf(s.det_h()[i], self.cfg.beta() / n as f64);
                (g, self.cfg.beta() / n as f64 * g / lam[0])
            } else {
                speed_factor(&self.cfg.curvature, lam, false, i)?
            };
            let speed = pre * g;
            q.push(speed / u);
            rhs.push(match self.cfg.variant {
                Variant::SupportOriginal => speed,
                Variant::SupportNormalizedSigmaK => speed - self.eta * u,
                _ => phi * speed - u,
            });
            coef = coef.max(phi * pre * dg);
        }
        Ok(Eval {
            rhs,
            q,
            coef,
            margin: s.min_lambda(),
            phi,
        })
    }

    fn evaluate(&self, state: &ShapeState, step: usize) -> Result<Eval> {
        let mut e = match state {
            ShapeState::Radial(r) => self.eval_radial(r)?,
            ShapeState::Support(s) => self.eval_support(s)?,
        };
        if let Some(h) = self.hook {
            h(step, &mut e.rhs);
        }
        if let Some(node) = e.rhs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteRhs { step, node });
        }
        Ok(e)
    }

    /// The right-hand side of the variant at `state`.
    pub fn rhs(&self, state: &ShapeState) -> Result<ScalarField> {
        self.check_state(state)?;
        ScalarField::new(self.grid.clone(), self.evaluate(state, 0)?.rhs)
    }

    fn dt_for(&self, e: &Eval, step: usize, t: f64) -> Result<f64> {
        let dt = match self.cfg.dt_override {
            Some(dt) => dt,
            None => {
                let h = self.grid.h_min();
                self.cfg.dt_safety * h * h / (self.cfg.n as f64 * e.coef)
            }
        };
        let dt = dt.min(self.cfg.t_end - t);
        if !(dt >= 1e-12 * self.cfg.t_end) {
            return Err(Error::DtUnderflow { step, dt });
        }
        Ok(dt)
    }

    fn midpoint(&self, state: &ShapeState, e: &Eval, dt: f64, step: usize) -> Result<ShapeState> {
        let w = state.values();
        let half: Vec<f64> = w.iter().zip(&e.rhs).map(|(w, r)| w + 0.5 * dt * r).collect();
        let mid = state.rebuild(half)?;
        let e2 = self.evaluate(&mid, step)?;
        state.rebuild(w.iter().zip(&e2.rhs).map(|(w, r)| w + dt * r).collect())
    }

    /// One midpoint step; returns the new state and the step size used.
    pub fn advance(&self, state: &ShapeState, t: f64, step: usize) -> Result<(ShapeState, f64)> {
        self.check_state(state)?;
        let e = self.evaluate(state, step)?;
        let dt = self.dt_for(&e, step, t)?;
        Ok((self.midpoint(state, &e, dt, step)?, dt))
    }

    /// Q = psi u^(alpha-1) rho^delta G at every node.
    pub fn barrier(&self, state: &ShapeState) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok(self.evaluate(state, 0)?.q)
    }

    /// Prepares the initial state: calibrated dilation of supercritical normalized
    /// runs, and the margin dilation of subcritical sigma_k normalized runs.
    fn prepare(&self, state: ShapeState) -> Result<(ShapeState, f64, Option<f64>)> {
        let s = self.cfg.exponent_sum();
        let v = self.cfg.variant;
        if matches!(v, Variant::RadialNormalized | Variant::SupportNormalizedSigmaK)
            && s > 1.0 + CRITICAL_TOL
        {
            let ts = match self.cfg.t_star {
                Some(ts) => ts,
                None => self.calibrate(&state)?,
            };
            let c = math::powf((s - 1.0) * self.eta * ts, 1.0 / (s - 1.0));
            return Ok((state.scaled(c)?, c, Some(ts)));
        }
        if v == Variant::SupportNormalizedSigmaK && s < 1.0 - CRITICAL_TOL {
            let q = self.evaluate(&state, 0)?.q;
            let qmin = min_max(&q).0;
            let target = PREDILATION_MARGIN * self.eta;
            if qmin < target {
                let c = math::powf(target / qmin, 1.0 / (s - 1.0));
                return Ok((state.scaled(c)?, c, None));
            }
        }
        Ok((state, 1.0, None))
    }

    /// Blow-up time of the original flow from `state`, fitted from a run to blow-up.
    fn calibrate(&self, state: &ShapeState) -> Result<f64> {
        let mut cfg = self.cfg.clone();
        cfg.variant = cfg.variant.original();
        cfg.stop_osc_tol = None;
        cfg.stop_residual_tol = None;
        cfg.t_star = None;
        let rho_min = min_max(state.rho()).0;
        let bound = blowup_time(rho_min, cfg.alpha, cfg.delta, cfg.beta(), self.eta)?;
        cfg.t_end = 2.0 * bound;
        let mut flow = Flow::new(&cfg)?;
        flow.hook = self.hook;
        let out = flow.run_from(state.clone())?;
        out.t_star_fit.ok_or_else(|| {
            Error::FitFailed(format!(
                "calibration run ended with {:?} before blowing up",
                out.verdict
            ))
        })
    }

    /// Runs from an initial shape description.
    pub fn run(&self, init: &InitialShape) -> Result<FlowOutcome> {
        self.run_from(self.initial_state(init)?)
    }

    /// Runs from a sampled state.
    pub fn run_from(&self, state: ShapeState) -> Result<FlowOutcome> {
        self.check_state(&state)?;
        let (state, scale, t_star_used) = self.prepare(state)?;
        let mut out = self.integrate(state)?;
        out.initial_scale = scale;
        out.t_star_used = t_star_used;
        Ok(out)
    }

    fn record(&self, state: &ShapeState, e: &Eval, step: usize, t: f64, dt: f64, scale: f64) -> Result<FlowRecord> {
        let cfg = &self.cfg;
        let (min_rho, max_rho) = min_max(state.rho());
        let (q_min, q_max) = min_max(&e.q);
        let (u_p_val, v_q_val) = match state {
            ShapeState::Support(s) => (
                u_p(s, &self.psi, self.exps.p, self.exps.beta),
                v_q(s, self.exps.q)?,
            ),
            ShapeState::Radial(r) => (
                u_p_radial(r, self.exps.p).unwrap_or(f64::NAN),
                v_q_radial(r, self.exps.q),
            ),
        };
        let residual = match cfg.variant {
            Variant::SupportNormalizedGauss => e
                .q
                .iter()
                .map(|h| (e.phi * h - 1.0).abs())
                .fold(0.0, f64::max),
            v if v.is_normalized() => e
                .q
                .iter()
                .map(|q| (q / self.eta - 1.0).abs())
                .fold(0.0, f64::max),
            _ => (q_max - q_min) / q_max,
        };
        let s = cfg.exponent_sum();
        let (tau, phi) = if cfg.variant == Variant::SupportNormalizedGauss {
            (t, e.phi)
        } else if cfg.variant.is_normalized() {
            (t, math::exp(self.eta * t) / scale)
        } else if s > 1.0 + CRITICAL_TOL {
            match cfg.t_star {
                Some(ts) if t < ts => (
                    tau_of_t(t, cfg.alpha, cfg.delta, cfg.beta(), self.eta, Some(ts))?,
                    phi_supercritical(t, s, self.eta, ts)?,
                ),
                _ => (f64::NAN, f64::NAN),
            }
        } else {
            (
                tau_of_t(t, cfg.alpha, cfg.delta, cfg.beta(), self.eta, None)?,
                phi_schedule(t, cfg.alpha, cfg.delta, cfg.beta(), self.eta, 1.0)?,
            )
        };
        Ok(FlowRecord {
            step,
            t,
            tau,
            dt,
            min_rho,
            max_rho,
            osc_rho: max_rho - min_rho,
            max_grad_gamma: state.max_grad_gamma(),
            min_lambda: e.margin,
            eta: self.eta,
            phi,
            q_min,
            q_max,
            u_p: u_p_val,
            v_q: v_q_val,
            j_pq: u_p_val - v_q_val,
            residual,
        })
    }

    fn converged(&self, rec: &FlowRecord) -> bool {
        let (osc, res) = (self.cfg.stop_osc_tol, self.cfg.stop_residual_tol);
        if osc.is_none() && res.is_none() {
            return false;
        }
        // Original flows grow without bound, so their oscillation is taken relative.
        let o = if self.cfg.variant.is_normalized() {
            rec.osc_rho
        } else {
            rec.osc_rho / rec.min_rho
        };
        osc.is_none_or(|tol| o < tol) && res.is_none_or(|tol| rec.residual < tol)
    }

    fn integrate(&self, mut state: ShapeState) -> Result<FlowOutcome> {
        let cfg = &self.cfg;
        let s = cfg.exponent_sum();
        let supercritical_original = !cfg.variant.is_normalized() && s > 1.0 + CRITICAL_TOL;
        let rho_max0 = min_max(state.rho()).1;
        let mut fit = LineFit::default();
        let mut history: Vec<FlowRecord> = Vec::new();
        let mut stride = 1usize;
        let mut monitors = Monitors::default();
        let mut prev: Option<(FlowRecord, f64)> = None;
        let mut v_q0 = None;
        let (mut t, mut step, mut dt) = (0.0, 0usize, 0.0);
        let mut e = self.evaluate(&state, 0)?;
        let verdict = loop {
            let rec = self.record(&state, &e, step, t, dt, 1.0)?;
            let gap = if cfg.variant == Variant::SupportNormalizedGauss {
                match &state {
                    ShapeState::Support(sh) => {
                        stationarity_gap(sh, &self.psi, cfg.alpha, cfg.delta, cfg.beta(), e.phi)
                    }
                    ShapeState::Radial(_) => 0.0,
                }
            } else {
                0.0
            };
            let v0 = *v_q0.get_or_insert(rec.v_q);
            monitors.v_q_drift = monitors.v_q_drift.max(((rec.v_q - v0) / v0).abs());
            if let Some((p, pgap)) = prev {
                let eta = self.eta;
                let dj = (rec.j_pq - p.j_pq) / (1.0 + p.j_pq.abs());
                if dj.is_finite() {
                    monitors.j_increase = monitors.j_increase.max(dj);
                }
                monitors.barrier_max_rise = monitors
                    .barrier_max_rise
                    .max((rec.q_max.max(eta) - p.q_max.max(eta)) / eta);
                monitors.barrier_min_drop = monitors
                    .barrier_min_drop
                    .max((p.q_min.min(eta) - rec.q_min.min(eta)) / eta);
                monitors.gap_rise = monitors.gap_rise.max(gap - pgap);
            }
            prev = Some((rec, gap));
            if let Some(obs) = self.observer {
                obs(&rec, &state);
            }
            if supercritical_original
                && rec.min_rho >= FIT_LO * rho_max0
                && rec.min_rho <= BLOWUP_FACTOR * rho_max0
            {
                fit.push(t, math::powf(rec.min_rho, 1.0 - s));
            }
            if step % stride == 0 {
                history.push(rec);
                if history.len() > MAX_HISTORY {
                    let mut idx = 0;
                    history.retain(|_| {
                        idx += 1;
                        idx % 2 == 1
                    });
                    stride *= 2;
                }
            }
            let verdict = if self.converged(&rec) {
                Some(Verdict::Converged)
            } else if supercritical_original && rec.min_rho > BLOWUP_FACTOR * rho_max0 {
                Some(Verdict::BlownUp)
            } else if t >= cfg.t_end * (1.0 - 1e-14) {
                Some(Verdict::TEndReached)
            } else if step >= cfg.max_steps {
                Some(Verdict::MaxStepsReached)
            } else {
                None
            };
            if let Some(v) = verdict {
                if history.last().map(|r| r.step) != Some(step) {
                    history.push(rec);
                }
                break v;
            }
            dt = self.dt_for(&e, step, t)?;
            state = self.midpoint(&state, &e, dt, step)?;
            t += dt;
            step += 1;
            e = self.evaluate(&state, step)?;
        };
        let mut t_star_fit = None;
        if verdict == Verdict::BlownUp {
            let ts = fit.root().ok_or_else(|| {
                Error::FitFailed(format!("{} samples in the fit window", fit.count))
            })?;
            t_star_fit = Some(ts);
            if cfg.t_star.is_none() {
                for r in &mut history {
                    if r.t < ts {
                        r.tau = tau_of_t(r.t, cfg.alpha, cfg.delta, cfg.beta(), self.eta, Some(ts))?;
                        r.phi = phi_supercritical(r.t, s, self.eta, ts)?;
                    }
                }
            }
        }
        Ok(FlowOutcome {
            final_phi: (cfg.variant == Variant::SupportNormalizedGauss).then_some(e.phi),
            final_state: state,
            history,
            verdict,
            steps: step,
            t,
            t_star_fit,
            t_star_used: None,
            initial_scale: 1.0,
            monitors,
        })
    }
}

/// Running least-squares line y = a + b t.
#[derive(Debug, Default, Clone, Copy)]
struct LineFit {
    count: usize,
    st: f64,
    sy: f64,
    stt: f64,
    sty: f64,
}

impl LineFit {
    fn push(&mut self, t: f64, y: f64) {
        self.count += 1;
        self.st += t;
        self.sy += y;
        self.stt += t * t;
        self.sty += t * y;
    }

    /// The t where the fitted line crosses zero.
    fn root(&self) -> Option<f64> {
        if self.count < 3 {
            return None;
        }
        let m = self.count as f64;
        let den = m * self.stt - self.st * self.st;
        let b = (m * self.sty - self.st * self.sy) / den;
        let a = (self.sy - b * self.st) / m;
        (b < 0.0).then(|| -a / b)
    }
}

/// phi of the Gauss normalized flow: the direction integral of rho^q over the
/// integral of psi u^alpha rho^(delta + n delta / beta) K^(-beta/n - 1) dx.
pub fn phi_integral(shape: &SupportShape, psi: &ScalarField, cfg: &FlowConfig) -> Result<f64> {
    let n = shape.dim() as f64;
    let beta = cfg.beta();
    let q = n + 1.0 + n * cfg.delta / beta;
    let w = shape.grid().weights();
    let (mut top, mut bottom) = (0.0, 0.0);
    for i in 0..w.len() {
        let (u, rho, d) = (shape.u()[i], shape.rho()[i], shape.det_h()[i]);
        if !(d > 0.0) {
            return Err(Error::NonConvex {
                what: "principal radius product",
                node: i,
                value: d,
            });
        }
        let jac = u * d / math::powf(rho, n + 1.0);
        top += w[i] * jac * math::powf(rho, q);
        bottom += w[i]
            * psi.values()[i]
            * math::powf(u, cfg.alpha)
            * math::powf(rho, cfg.delta + n * cfg.delta / beta)
            * math::powf(d, beta / n + 1.0);
    }
    Ok(top / bottom)
}

/// u^alpha rho^delta f^(-beta)(kappa) omega.
pub fn rhs_radial_original(shape: &RadialShape, cfg: &FlowConfig) -> Result<ScalarField> {
    let mut c = cfg.clone();
    c.variant = Variant::RadialOriginal;
    Flow::new(&c)?.rhs(&ShapeState::Radial(shape.clone()))
}

/// (u^alpha rho^delta f^(-beta)(kappa) - eta u) omega.
pub fn rhs_radial_normalized(shape: &RadialShape, cfg: &FlowConfig) -> Result<ScalarField> {
    let mut c = cfg.clone();
    c.variant = Variant::RadialNormalized;
    Flow::new(&c)?.rhs(&ShapeState::Radial(shape.clone()))
}

/// Support-function speed of the configured support variant; `phi_now` replaces the
/// integral phi of the Gauss normalized flow when given.
pub fn rhs_support(shape: &SupportShape, cfg: &FlowConfig, phi_now: Option<f64>) -> Result<ScalarField> {
    if cfg.variant.is_radial() {
        return Err(Error::InvalidConfig("rhs_support needs a support variant".into()));
    }
    let flow = Flow::new(cfg)?;
    let state = ShapeState::Support(shape.clone());
    flow.check_state(&state)?;
    let mut e = flow.evaluate(&state, 0)?;
    if let (Some(p), Variant::SupportNormalizedGauss) = (phi_now, cfg.variant) {
        for ((r, q), u) in e.rhs.iter_mut().zip(&e.q).zip(shape.u()) {
            *r = p * q * u - u;
        }
    }
    ScalarField::new(flow.grid.clone(), e.rhs)
}

/// Runs `cfg` from `init`.
pub fn run(cfg: &FlowConfig, init: &InitialShape) -> Result<FlowOutcome> {
    Flow::new(cfg)?.run(init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::Argument::{PrincipalCurvatures, PrincipalRadii};
    use crate::oracle::spherical_theta;

    fn sigma(k: usize, arg: Argument, beta: f64) -> CurvatureSpec {
        CurvatureSpec::sigma_k_root(k, arg, beta).unwrap()
    }

    fn small(mut c: FlowConfig) -> FlowConfig {
        c.n_theta = 8;
        c.n_phi = 16;
        c
    }

    fn sphere(r: f64) -> InitialShape {
        InitialShape::Sphere { radius: r }
    }

    #[test]
    fn schedules() {
        assert!((phi_schedule(0.7, 0.0, 0.0, 1.0, 1.0, 1.0).unwrap() - math::exp(0.7)).abs() < 1e-14);
        let p = phi_schedule(0.5, 0.0, 0.0, 2.0, 1.0, 1.0).unwrap();
        assert!((p - 2.0).abs() < 1e-12);
        assert!(phi_schedule(1.0, 0.0, 0.0, 2.0, 1.0, 1.0).is_err());
        for s in [0.0f64, 1.0, 2.0] {
            assert!((phi_schedule(0.0, 0.0, 0.0, s.max(0.5), 1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        }
        assert_eq!(blowup_time(1.0, 0.0, 0.0, 2.0, 1.0).unwrap(), 1.0);
        assert_eq!(blowup_time(2.0, 0.0, 0.0, 2.0, 1.0).unwrap(), 0.5);
        assert!(blowup_time(1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert_eq!(tau_of_t(0.3, 0.0, 0.0, 1.0, 1.0, None).unwrap(), 0.3);
        assert_eq!(tau_of_t(0.0, -1.0, 0.0, 1.0, 1.0, None).unwrap(), 0.0);
        assert_eq!(tau_of_t(0.0, 0.0, 0.0, 2.0, 1.0, Some(1.0)).unwrap(), 0.0);
        // d tau / dt = phi^(s - 1).
        for (a, b, ts) in [(-1.0, 1.0, None), (0.0, 2.0, Some(1.0)), (0.0, 0.5, None)] {
            let (t, h) = (0.3, 1e-5);
            let d = (tau_of_t(t + h, a, 0.0, b, 1.3, ts).unwrap()
                - tau_of_t(t - h, a, 0.0, b, 1.3, ts).unwrap())
                / (2.0 * h);
            let phi = match ts {
                Some(ts) => phi_supercritical(t, a + b, 1.3, ts).unwrap(),
                None => phi_schedule(t, a, 0.0, b, 1.3, 1.0).unwrap(),
            };
            let want = math::powf(phi, a + b - 1.0);
            assert!(((d - want) / want).abs() < 1e-6, "{d} {want}");
        }
    }

    #[test]
    fn spherical_right_hand_sides() {
        let cfg = small(FlowConfig::new(Variant::RadialOriginal, 0.0, 0.0, sigma(2, PrincipalCurvatures, 1.0), 2));
        let flow = Flow::new(&cfg).unwrap();
        let st = flow.initial_state(&sphere(2.0)).unwrap();
        for v in flow.rhs(&st).unwrap().values() {
            assert!((v - 2.0).abs() < 1e-12);
        }
        // General exponents: rhs = eta r^s with eta = f(1,1)^(-beta).
        let spec = sigma(1, PrincipalCurvatures, 1.5);
        let cfg = small(FlowConfig::new(Variant::RadialOriginal, -0.5, 0.3, spec, 2));
        let shape = InitialShape::Sphere { radius: 1.7 }.radial(&cfg.grid().unwrap()).unwrap();
        let want = cfg.eta() * math::powf(1.7, cfg.exponent_sum());
        for v in rhs_radial_original(&shape, &cfg).unwrap().values() {
            assert!(((v - want) / want).abs() < 1e-12);
        }
        // Normalized: rho' = eta (rho^s - rho).
        let cfg = small(FlowConfig::new(Variant::RadialNormalized, 0.0, 0.0, sigma(2, PrincipalCurvatures, 2.0), 2));
        let shape = sphere(2.0).radial(&cfg.grid().unwrap()).unwrap();
        for v in rhs_radial_normalized(&shape, &cfg).unwrap().values() {
            assert!((v - 2.0).abs() < 1e-12);
        }
        let cfg = small(FlowConfig::new(Variant::RadialNormalized, -1.0, 0.5, sigma(2, PrincipalCurvatures, 1.5), 2));
        let shape = sphere(3.0).radial(&cfg.grid().unwrap()).unwrap();
        assert!(rhs_radial_normalized(&shape, &cfg).unwrap().values().iter().all(|v| v.abs() < 1e-12));
        // Support flows.
        let cfg = small(FlowConfig::new(Variant::SupportOriginal, 0.0, 0.0, sigma(1, PrincipalRadii, 2.0), 2));
        let s = sphere(1.5).support(&cfg.grid().unwrap()).unwrap();
        let want = 4.0 * 1.5 * 1.5;
        for v in rhs_support(&s, &cfg, None).unwrap().values() {
            assert!((v - want).abs() < 1e-12);
        }
        for variant in [Variant::SupportNormalizedSigmaK, Variant::SupportNormalizedGauss] {
            let cfg = small(FlowConfig::new(variant, 0.0, 0.0, sigma(2, PrincipalRadii, 1.0), 2));
            let s = sphere(1.0).support(&cfg.grid().unwrap()).unwrap();
            let r = rhs_support(&s, &cfg, Some(1.0)).unwrap();
            assert!(r.values().iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn gauss_phi_fixes_every_ball() {
        let mut cfg = small(FlowConfig::new(Variant::SupportNormalizedGauss, 0.3, -0.4, sigma(2, PrincipalRadii, 1.5), 2));
        let g = cfg.grid().unwrap();
        let one = ScalarField::constant(g.clone(), 1.0);
        let unit = sphere(1.0).support(&g).unwrap();
        assert!((phi_integral(&unit, &one, &cfg).unwrap() - 1.0).abs() < 1e-12);
        for r in [0.5, 2.0, 3.0] {
            let s = sphere(r).support(&g).unwrap();
            let phi = phi_integral(&s, &one, &cfg).unwrap();
            assert!((phi - math::powf(r, 1.0 - cfg.exponent_sum())).abs() < 1e-12 * phi);
            assert!(rhs_support(&s, &cfg, None).unwrap().values().iter().all(|v| v.abs() < 1e-12));
        }
        cfg.psi = PsiSpec::Quadratic {
            c0: 1.0,
            terms: alloc::vec![PsiTerm { direction: [0.0, 0.0, 1.0], coeff: 0.1 }],
        };
        let e = InitialShape::Ellipsoid { axes: alloc::vec![1.0, 1.0, 1.3] }.support(&g).unwrap();
        let phi = phi_integral(&e, &cfg.psi.field(&g).unwrap(), &cfg).unwrap();
        assert!(phi > 0.0 && phi.is_finite());
    }

    #[test]
    fn sphere_stays_on_oracle() {
        let mut cfg = small(FlowConfig::new(Variant::RadialOriginal, -1.0, 0.0, sigma(2, PrincipalCurvatures, 1.0), 2));
        cfg.t_end = 0.5;
        cfg.dt_override = Some(1e-3);
        let out = run(&cfg, &sphere(1.0)).unwrap();
        assert_eq!(out.verdict, Verdict::TEndReached);
        let want = spherical_theta(1.0, 0.5, -1.0, 0.0, 1.0, 1.0).unwrap();
        for r in out.final_state.rho() {
            assert!(((r - want) / want).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_points_do_not_drift() {
        for (variant, spec) in [
            (Variant::RadialNormalized, sigma(2, PrincipalCurvatures, 1.0)),
            (Variant::SupportNormalizedSigmaK, sigma(1, PrincipalRadii, 1.0)),
            (Variant::SupportNormalizedGauss, sigma(2, PrincipalRadii, 2.0)),
        ] {
            let mut cfg = small(FlowConfig::new(variant, -1.0, -0.5, spec, 2));
            cfg.max_steps = 200;
            cfg.t_end = 1e6;
            let flow = Flow::new(&cfg).unwrap();
            let st = flow.initial_state(&sphere(1.0)).unwrap();
            let out = flow.integrate(st).unwrap();
            assert_eq!(out.steps, 200);
            let drift = out.final_state.values().iter().map(|u| (u - 1.0).abs()).fold(0.0, f64::max);
            assert!(drift < 1e-12, "{variant:?} drift {drift}");
        }
    }

    #[test]
    fn sphere_converges_at_step_zero() {
        let mut cfg = small(FlowConfig::new(Variant::RadialNormalized, -1.0, 0.0, sigma(1, PrincipalCurvatures, 1.0), 2));
        cfg.stop_osc_tol = Some(1e-3);
        let out = run(&cfg, &sphere(1.0)).unwrap();
        assert_eq!((out.verdict, out.steps, out.history.len()), (Verdict::Converged, 0, 1));
    }

    #[test]
    fn blow_up_is_detected_and_fitted() {
        let mut cfg = small(FlowConfig::new(Variant::SupportOriginal, 0.0, 0.0, sigma(2, PrincipalRadii, 2.0), 2));
        cfg.t_end = 2.0;
        let out = run(&cfg, &sphere(1.0)).unwrap();
        assert_eq!(out.verdict, Verdict::BlownUp);
        assert!((out.t_star_fit.unwrap() - 1.0).abs() < 1e-3);
        let r = &out.history[out.history.len() / 2];
        let phi = phi_supercritical(r.t, 2.0, 1.0, out.t_star_fit.unwrap()).unwrap();
        assert!((r.phi - phi).abs() < 1e-12 && r.tau.is_finite());
    }

    #[test]
    fn nan_injection_names_the_step() {
        let mut cfg = small(FlowConfig::new(Variant::RadialOriginal, -1.0, 0.0, sigma(1, PrincipalCurvatures, 1.0), 2));
        cfg.t_end = 1.0;
        let hook = |step: usize, rhs: &mut [f64]| {
            if step == 7 {
                rhs[3] = f64::NAN;
            }
        };
        let flow = Flow::new(&cfg).unwrap().with_rhs_hook(&hook);
        let err = flow.run(&sphere(1.0)).unwrap_err();
        assert_eq!(err, Error::NonFiniteRhs { step: 7, node: 3 });
    }

    #[test]
    fn config_validation() {
        let mut cfg = FlowConfig::new(Variant::RadialOriginal, 0.0, 0.0, sigma(1, PrincipalCurvatures, 1.0), 2);
        cfg.psi = PsiSpec::Constant { value: 2.0 };
        assert!(Flow::new(&cfg).is_err());
        let mut cfg = FlowConfig::new(Variant::SupportNormalizedGauss, 0.0, 0.0, sigma(1, PrincipalRadii, 1.0), 2);
        assert!(cfg.validate().is_err());
        cfg.curvature = sigma(2, PrincipalRadii, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.dt_safety = 1.5;
        assert!(cfg.validate().is_err());
        let json = serde_json::to_string(&FlowConfig::new(Variant::SupportOriginal, 0.0, 0.0, sigma(2, PrincipalRadii, 2.0), 2)).unwrap();
        let back: FlowConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.variant, Variant::SupportOriginal);
        assert!(serde_json::from_str::<FlowConfig>(&json.replace("\"alpha\"", "\"alfa\"")).is_err());
        let neg = PsiSpec::Quadratic {
            c0: 0.05,
            terms: alloc::vec![PsiTerm { direction: [1.0, 0.0, 0.0], coeff: -0.1 }],
        };
        assert!(neg.field(&cfg.grid().unwrap()).is_err());
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = small(FlowConfig::new(Variant::RadialNormalized, -1.0, 0.0, sigma(1, PrincipalCurvatures, 1.0), 2));
        cfg.max_steps = 50;
        cfg.t_end = 1e3;
        let init = InitialShape::RadialPerturbation {
            radius: 1.0,
            epsilon: 0.2,
            direction: Some([0.0, 0.0, 1.0]),
            zonal_mode: None,
        };
        let a = run(&cfg, &init).unwrap();
        let b = run(&cfg, &init).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.final_state.values(), b.final_state.values());
    }

    #[test]
    fn circle_flow_runs() {
        let mut cfg = FlowConfig::new(Variant::RadialNormalized, -1.0, 0.0, sigma(1, PrincipalCurvatures, 1.0), 1);
        cfg.n_theta = 32;
        cfg.t_end = 30.0;
        cfg.stop_osc_tol = Some(1e-4);
        let init = InitialShape::RadialPerturbation {
            radius: 1.0,
            epsilon: 0.1,
            direction: None,
            zonal_mode: Some(2),
        };
        let out = run(&cfg, &init).unwrap();
        assert_eq!(out.verdict, Verdict::Converged);
    }
}
