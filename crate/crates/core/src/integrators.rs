//! One-stage explicit trigonometric integrators.
//!
//! A step of size `h` with coefficient filters `b̄1`, `b1` reads
//!
//! ```text
//! u_{n+1/2} = cos(hΩ/2) u_n + (h/2) sinc(hΩ/2) u̇_n
//! u_{n+1}   = cos(hΩ) u_n + h sinc(hΩ) u̇_n + κ h² b̄1(hΩ) f(u_{n+1/2})
//! u̇_{n+1}   = -Ω sin(hΩ) u_n + cos(hΩ) u̇_n + κ h b1(hΩ) f(u_{n+1/2})
//! ```
//!
//! All filters are diagonal in Fourier space and are tabulated once per
//! `(method, h, K)` in [`StepFilters`]. The Strang splitting maps
//! (linear half flow, nonlinear kick) live here too, since they give an
//! independent factorization of the same one-step maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::{Nonlinearity, ProblemError};
use crate::spectral::{bracket, pair_norm, sinc, OperatorSpectrum, PairState, SpectralError, SpectralField};

/// Trajectories whose `|||·|||₀` norm exceeds this are treated as blown up.
pub const BLOW_UP_NORM: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("unknown method `{0}` (expected TI1, TI2, TI3 or NTI)")]
    UnknownMethod(String),
    #[error("invalid step size {0}")]
    InvalidStep(f64),
    #[error("nonlinearity returned degree {got}, expected {expected}")]
    RhsDegree { expected: usize, got: usize },
    #[error("non-finite coefficients after step {step}")]
    NonFinite { step: usize },
    #[error("blow-up after step {step}: norm {norm:e}")]
    BlowUp { step: usize, norm: f64 },
    #[error("{0} requires a symmetric method")]
    NotSymmetric(MethodName),
    #[error(transparent)]
    Rhs(#[from] ProblemError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodName {
    TI1,
    TI2,
    TI3,
    NTI,
}

impl MethodName {
    pub const ALL: [MethodName; 4] = [MethodName::TI1, MethodName::TI2, MethodName::TI3, MethodName::NTI];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::TI1 => "TI1",
            MethodName::TI2 => "TI2",
            MethodName::TI3 => "TI3",
            MethodName::NTI => "NTI",
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodName {
    type Err = IntegratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "TI1" => Ok(MethodName::TI1),
            "TI2" => Ok(MethodName::TI2),
            "TI3" => Ok(MethodName::TI3),
            "NTI" => Ok(MethodName::NTI),
            _ => Err(IntegratorError::UnknownMethod(s.to_string())),
        }
    }
}

/// Which update formula a method uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateForm {
    /// Staged one-stage scheme with `b̄1`, `b1`.
    OneStage,
    /// `Φ_{h/2,NL} ∘ Φ_{h,L} ∘ Φ_{h/2,NL}` written out with `Υ`.
    KickDriftKick,
}

/// Filter functions of one integrator, all evaluated at `ξ = h⟨j⟩`.
///
/// `theta` is `b1 / sinc` in closed form and `upsilon` is `b1 / cos(ξ/2)`.
#[derive(Debug, Clone, Copy)]
pub struct MethodCoefficients {
    pub name: MethodName,
    pub c1: f64,
    pub symmetric: bool,
    pub form: UpdateForm,
    b1: fn(f64) -> f64,
    bbar1: fn(f64) -> f64,
    theta: fn(f64) -> f64,
    upsilon: fn(f64) -> f64,
}

impl MethodCoefficients {
    pub fn b1(&self, xi: f64) -> f64 {
        (self.b1)(xi)
    }

    pub fn bbar1(&self, xi: f64) -> f64 {
        (self.bbar1)(xi)
    }

    pub fn theta(&self, xi: f64) -> f64 {
        (self.theta)(xi)
    }

    pub fn upsilon(&self, xi: f64) -> f64 {
        (self.upsilon)(xi)
    }
}

fn half_sinc(xi: f64) -> f64 {
    sinc(0.5 * xi)
}

fn half_cos(xi: f64) -> f64 {
    (0.5 * xi).cos()
}

mod ti1 {
    use super::*;
    pub fn bbar1(xi: f64) -> f64 {
        0.5 * half_sinc(xi).powi(3)
    }
    pub fn b1(xi: f64) -> f64 {
        half_sinc(xi).powi(2) * half_cos(xi)
    }
    pub fn theta(xi: f64) -> f64 {
        half_sinc(xi)
    }
    pub fn upsilon(xi: f64) -> f64 {
        half_sinc(xi).powi(2)
    }
}

mod ti2 {
    use super::*;
    pub fn bbar1(xi: f64) -> f64 {
        0.5 * sinc(xi) * half_sinc(xi)
    }
    pub fn b1(xi: f64) -> f64 {
        sinc(xi) * half_cos(xi)
    }
    pub fn theta(xi: f64) -> f64 {
        half_cos(xi)
    }
    pub fn upsilon(xi: f64) -> f64 {
        sinc(xi)
    }
}

mod ti3 {
    use super::*;
    pub fn bbar1(xi: f64) -> f64 {
        0.5 * sinc(xi) * half_sinc(xi).powi(2)
    }
    pub fn b1(xi: f64) -> f64 {
        sinc(xi) * half_sinc(xi) * half_cos(xi)
    }
    pub fn theta(xi: f64) -> f64 {
        half_sinc(xi) * half_cos(xi)
    }
    pub fn upsilon(xi: f64) -> f64 {
        sinc(xi) * half_sinc(xi)
    }
}

/// Coefficient set for a registered method.
///
/// NTI shares TI2's filters (`Υ = sinc`) but steps with the kick-drift-kick
/// update, so it is not flagged symmetric in the one-stage sense.
pub fn builtin_method(name: MethodName) -> MethodCoefficients {
    let (b1, bbar1, theta, upsilon): (fn(f64) -> f64, fn(f64) -> f64, fn(f64) -> f64, fn(f64) -> f64) = match name {
        MethodName::TI1 => (ti1::b1, ti1::bbar1, ti1::theta, ti1::upsilon),
        MethodName::TI2 | MethodName::NTI => (ti2::b1, ti2::bbar1, ti2::theta, ti2::upsilon),
        MethodName::TI3 => (ti3::b1, ti3::bbar1, ti3::theta, ti3::upsilon),
    };
    let one_stage = name != MethodName::NTI;
    MethodCoefficients {
        name,
        c1: 0.5,
        symmetric: one_stage,
        form: if one_stage {
            UpdateForm::OneStage
        } else {
            UpdateForm::KickDriftKick
        },
        b1,
        bbar1,
        theta,
        upsilon,
    }
}

pub fn builtin_method_by_name(name: &str) -> Result<MethodCoefficients, IntegratorError> {
    Ok(builtin_method(name.parse()?))
}

/// Worst-case residuals of the algebraic identities linking a method's filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityResiduals {
    /// `|sinc(ξ) b1 - (1 + cos ξ) b̄1|`
    pub symmetry: f64,
    /// `|Θ sinc(ξ) - b1|`, relative to the magnitude of the terms.
    pub theta: f64,
    /// `|Υ cos(ξ/2) - b1|`
    pub upsilon_b1: f64,
    /// `|Υ sinc(ξ/2) - 2 b̄1|`
    pub upsilon_bbar1: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.symmetry.max(self.theta).max(self.upsilon_b1).max(self.upsilon_bbar1)
    }
}

pub fn identity_residuals(m: &MethodCoefficients, xis: &[f64]) -> IdentityResiduals {
    let mut r = IdentityResiduals {
        symmetry: 0.0,
        theta: 0.0,
        upsilon_b1: 0.0,
        upsilon_bbar1: 0.0,
    };
    for &xi in xis {
        let (b1, bb, th, ups) = (m.b1(xi), m.bbar1(xi), m.theta(xi), m.upsilon(xi));
        let s = sinc(xi);
        r.symmetry = r.symmetry.max((s * b1 - (1.0 + xi.cos()) * bb).abs());
        let scale = (th * s).abs().max(b1.abs());
        if scale > 0.0 {
            r.theta = r.theta.max((th * s - b1).abs() / scale);
        }
        r.upsilon_b1 = r.upsilon_b1.max((ups * half_cos(xi) - b1).abs());
        r.upsilon_bbar1 = r.upsilon_bbar1.max((ups * half_sinc(xi) - 2.0 * bb).abs());
    }
    r
}

/// Sample grid for the filter bounds: `samples` log-spaced points in
/// `[1e-6, ξ_max]` merged with `samples` uniform points shifted by an
/// irrational fraction of the spacing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleGrid {
    pub xi_max: f64,
    pub samples: usize,
    pub log_min: f64,
    pub uniform_offset: f64,
    pub points: Vec<f64>,
}

impl SampleGrid {
    pub fn new(xi_max: f64, samples: usize) -> Self {
        let log_min = 1e-6_f64;
        let uniform_offset = (5f64.sqrt() - 1.0) / 2.0;
        let mut points = Vec::with_capacity(2 * samples);
        let (l0, l1) = (log_min.ln(), xi_max.ln());
        for i in 0..samples {
            let t = i as f64 / (samples - 1).max(1) as f64;
            points.push((l0 + t * (l1 - l0)).exp());
        }
        for i in 0..samples {
            points.push(xi_max * (i as f64 + uniform_offset) / samples as f64);
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        Self {
            xi_max,
            samples,
            log_min,
            uniform_offset,
            points,
        }
    }
}

/// Supremum estimate for one filter bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundEstimate {
    pub label: &'static str,
    pub supremum: f64,
    pub argmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub method: MethodName,
    pub grid: SampleGrid,
    pub bounds: [BoundEstimate; 6],
}

impl AssumptionReport {
    /// Pass/fail of each bound against the constant `c`.
    pub fn passes(&self, c: f64) -> [bool; 6] {
        std::array::from_fn(|i| self.bounds[i].supremum <= c)
    }
}

/// Default constant used to judge the filter bounds.
pub const DEFAULT_BOUND_CONSTANT: f64 = 10.0;

pub const BOUND_LABELS: [&str; 6] = [
    "|xi bbar1|",
    "|xi^2 bbar1|",
    "|bbar1 - sinc(xi/2)/2| / xi",
    "|xi b1|",
    "|b1 - cos(xi/2)| / xi^2",
    "|xi theta|",
];

fn bound_value(m: &MethodCoefficients, which: usize, xi: f64) -> f64 {
    match which {
        0 => (xi * m.bbar1(xi)).abs(),
        1 => (xi * xi * m.bbar1(xi)).abs(),
        2 => (m.bbar1(xi) - 0.5 * half_sinc(xi)).abs() / xi,
        3 => (xi * m.b1(xi)).abs(),
        4 => (m.b1(xi) - half_cos(xi)).abs() / (xi * xi),
        _ => (xi * m.theta(xi)).abs(),
    }
}

/// Maximizes `f` on `[lo, hi]` by golden-section search.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Estimates the suprema of the six filter bounds over `(0, ξ_max]`.
///
/// The grid maximum of each bound is refined by a golden-section search
/// between its neighbouring grid points, so peaks that fall between samples
/// are resolved to round-off. The reported value is never below the grid
/// maximum.
pub fn check_assumption1(m: &MethodCoefficients, xi_max: f64, samples: usize) -> Result<AssumptionReport, IntegratorError> {
    if !xi_max.is_finite() || xi_max <= 0.0 {
        return Err(IntegratorError::InvalidStep(xi_max));
    }
    let grid = SampleGrid::new(xi_max, samples.max(2));
    let pts = &grid.points;
    let mut bounds = Vec::with_capacity(6);
    for which in 0..6 {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &xi) in pts.iter().enumerate() {
            let v = bound_value(m, which, xi);
            if !v.is_finite() {
                return Err(SpectralError::NonFiniteFilter { mode: 0, xi }.into());
            }
            if v > best.1 {
                best = (i, v);
            }
        }
        let (i, grid_sup) = best;
        let lo = pts[i.saturating_sub(1)];
        let hi = pts[(i + 1).min(pts.len() - 1)];
        let (x, refined) = golden_max(|xi| bound_value(m, which, xi), lo, hi);
        let (argmax, supremum) = if refined > grid_sup { (x, refined) } else { (pts[i], grid_sup) };
        bounds.push(BoundEstimate {
            label: BOUND_LABELS[which],
            supremum,
            argmax,
        });
    }
    let report = AssumptionReport {
        method: m.name,
        grid,
        bounds: bounds.try_into().expect("six bounds"),
    };
    Ok(report)
}

/// Exact linear flow `R(t)`: per mode with `ω = ⟨j⟩`,
/// `(û, û̇) ↦ (cos(tω) û + sin(tω)/ω û̇, -ω sin(tω) û + cos(tω) û̇)`.
pub fn linear_flow(st: &PairState, t: f64) -> PairState {
    let k = st.degree() as i64;
    let mut u = st.u.clone();
    let mut udot = st.udot.clone();
    for (idx, j) in (-k..=k).enumerate() {
        let w = bracket(j);
        let (s, c) = (t * w).sin_cos();
        let (a, b) = (st.u.coeffs()[idx], st.udot.coeffs()[idx]);
        u.coeffs_mut()[idx] = a * c + b * (s / w);
        udot.coeffs_mut()[idx] = a * (-w * s) + b * c;
    }
    PairState {
        u,
        udot,
        time: st.time + t,
    }
}

/// Filter tables for one `(method, h, K)`, in field storage order.
#[derive(Debug, Clone)]
pub struct StepFilters {
    pub degree: usize,
    pub h: f64,
    pub cos_full: Vec<f64>,
    /// `h sinc(hω)`
    pub h_sinc_full: Vec<f64>,
    /// `ω sin(hω)`
    pub omega_sin_full: Vec<f64>,
    pub cos_half: Vec<f64>,
    /// `(h/2) sinc(hω/2)`
    pub h_sinc_half: Vec<f64>,
    /// `h² b̄1(hω)`
    pub h2_bbar1: Vec<f64>,
    /// `h b1(hω)`
    pub h_b1: Vec<f64>,
    pub upsilon: Vec<f64>,
    pub theta: Vec<f64>,
}

impl StepFilters {
    pub fn new(m: &MethodCoefficients, h: f64, degree: usize) -> Result<Self, IntegratorError> {
        if !h.is_finite() {
            return Err(IntegratorError::InvalidStep(h));
        }
        let spec = OperatorSpectrum::new(degree);
        let tab = |f: &dyn Fn(f64) -> f64| spec.tabulate(f, h);
        Ok(Self {
            degree,
            h,
            cos_full: tab(&f64::cos)?,
            h_sinc_full: tab(&|xi| h * sinc(xi))?,
            omega_sin_full: spec
                .weights()
                .iter()
                .map(|&w| w * (h * w).sin())
                .collect(),
            cos_half: tab(&half_cos)?,
            h_sinc_half: tab(&|xi| 0.5 * h * half_sinc(xi))?,
            h2_bbar1: tab(&|xi| h * h * m.bbar1(xi))?,
            h_b1: tab(&|xi| h * m.b1(xi))?,
            upsilon: tab(&|xi| m.upsilon(xi))?,
            theta: tab(&|xi| m.theta(xi))?,
        })
    }

    /// `R(h)` applied with the cached tables.
    fn linear_full(&self, st: &PairState) -> (SpectralField, SpectralField) {
        let mut u = st.u.scale_modes(&self.cos_full);
        u.add_scaled_modes(1.0, &self.h_sinc_full, &st.udot);
        let mut udot = st.udot.scale_modes(&self.cos_full);
        udot.add_scaled_modes(-1.0, &self.omega_sin_full, &st.u);
        (u, udot)
    }
}

/// A step together with the stage at which the nonlinearity was evaluated.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: PairState,
    /// `u_{n+1/2}` for the one-stage form, `q^n` for kick-drift-kick.
    pub stage: SpectralField,
    /// `f̂(stage)`, without the `κ` prefactor.
    pub rhs: SpectralField,
}

/// A method bound to a step size, strength and degree, with cached filters.
#[derive(Debug, Clone)]
pub struct Integrator {
    method: MethodCoefficients,
    kappa: f64,
    filters: StepFilters,
}

fn eval_rhs<N: Nonlinearity + ?Sized>(rhs: &mut N, u: &SpectralField) -> Result<SpectralField, IntegratorError> {
    let out = rhs.evaluate(u)?;
    if out.degree() != u.degree() {
        return Err(IntegratorError::RhsDegree {
            expected: u.degree(),
            got: out.degree(),
        });
    }
    Ok(out)
}

impl Integrator {
    pub fn new(method: MethodCoefficients, h: f64, kappa: f64, degree: usize) -> Result<Self, IntegratorError> {
        Ok(Self {
            method,
            kappa,
            filters: StepFilters::new(&method, h, degree)?,
        })
    }

    pub fn method(&self) -> &MethodCoefficients {
        &self.method
    }

    pub fn h(&self) -> f64 {
        self.filters.h
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn filters(&self) -> &StepFilters {
        &self.filters
    }

    pub fn step<N: Nonlinearity + ?Sized>(&self, st: &PairState, rhs: &mut N) -> Result<PairState, IntegratorError> {
        self.step_detailed(st, rhs).map(|o| o.state)
    }

    pub fn step_detailed<N: Nonlinearity + ?Sized>(&self, st: &PairState, rhs: &mut N) -> Result<StepOutcome, IntegratorError> {
        if st.degree() != self.filters.degree {
            return Err(SpectralError::DegreeMismatch {
                left: st.degree(),
                right: self.filters.degree,
            }
            .into());
        }
        let outcome = match self.method.form {
            UpdateForm::OneStage => self.one_stage(st, rhs)?,
            UpdateForm::KickDriftKick => self.kick_drift_kick(st, rhs)?,
        };
        if !outcome.state.is_finite() {
            return Err(IntegratorError::NonFinite { step: 0 });
        }
        Ok(outcome)
    }

    fn one_stage<N: Nonlinearity + ?Sized>(&self, st: &PairState, rhs: &mut N) -> Result<StepOutcome, IntegratorError> {
        let f = &self.filters;
        let mut stage = st.u.scale_modes(&f.cos_half);
        stage.add_scaled_modes(1.0, &f.h_sinc_half, &st.udot);
        let (mut u, mut udot) = f.linear_full(st);
        let g = if self.kappa != 0.0 {
            let g = eval_rhs(rhs, &stage)?;
            u.add_scaled_modes(self.kappa, &f.h2_bbar1, &g);
            udot.add_scaled_modes(self.kappa, &f.h_b1, &g);
            g
        } else {
            SpectralField::zeros(st.degree())
        };
        Ok(StepOutcome {
            state: PairState {
                u,
                udot,
                time: st.time + f.h,
            },
            stage,
            rhs: g,
        })
    }

    fn kick_drift_kick<N: Nonlinearity + ?Sized>(&self, st: &PairState, rhs: &mut N) -> Result<StepOutcome, IntegratorError> {
        let f = &self.filters;
        let h = f.h;
        let (mut q, mut p) = f.linear_full(st);
        let g0 = if self.kappa != 0.0 {
            let g0 = eval_rhs(rhs, &st.u)?;
            // ½h² sinc(hΩ) Υ G(q^n) and ½h cos(hΩ) Υ G(q^n)
            let qk: Vec<f64> = f.h_sinc_full.iter().zip(&f.upsilon).map(|(a, b)| 0.5 * h * a * b).collect();
            let pk: Vec<f64> = f.cos_full.iter().zip(&f.upsilon).map(|(a, b)| 0.5 * h * a * b).collect();
            q.add_scaled_modes(self.kappa, &qk, &g0);
            p.add_scaled_modes(self.kappa, &pk, &g0);
            let g1 = eval_rhs(rhs, &q)?;
            p.add_scaled_modes(0.5 * h * self.kappa, &f.upsilon, &g1);
            g0
        } else {
            SpectralField::zeros(st.degree())
        };
        Ok(StepOutcome {
            state: PairState {
                u: q,
                udot: p,
                time: st.time + h,
            },
            stage: st.u.clone(),
            rhs: g0,
        })
    }
}

/// One step of `m` with step size `h` (negative `h` steps backwards).
pub fn step<N: Nonlinearity + ?Sized>(
    st: &PairState,
    h: f64,
    m: &MethodCoefficients,
    rhs: &mut N,
    kappa: f64,
) -> Result<PairState, IntegratorError> {
    Integrator::new(*m, h, kappa, st.degree())?.step(st, rhs)
}

/// `Φ_{h/2,L}`: the linear flow over half a step.
pub fn splitting_linear_half(st: &PairState, h: f64) -> PairState {
    linear_flow(st, 0.5 * h)
}

/// `p ↦ p + τ Υ(hΩ) κ f(q)` with `q` unchanged; `Υ` is evaluated at the
/// full step `h` whatever the kick length `τ`.
pub fn nonlinear_kick<N: Nonlinearity + ?Sized>(
    st: &PairState,
    tau: f64,
    h: f64,
    m: &MethodCoefficients,
    rhs: &mut N,
    kappa: f64,
) -> Result<PairState, IntegratorError> {
    if kappa == 0.0 || tau == 0.0 {
        return Ok(st.clone());
    }
    let g = eval_rhs(rhs, &st.u)?;
    let ups = OperatorSpectrum::new(st.degree()).tabulate(|xi| m.upsilon(xi), h)?;
    let mut udot = st.udot.clone();
    udot.add_scaled_modes(tau * kappa, &ups, &g);
    Ok(PairState {
        u: st.u.clone(),
        udot,
        time: st.time,
    })
}

/// `Φ_{h,NL}`: the full-step nonlinear kick.
pub fn splitting_nonlinear<N: Nonlinearity + ?Sized>(
    st: &PairState,
    h: f64,
    m: &MethodCoefficients,
    rhs: &mut N,
    kappa: f64,
) -> Result<PairState, IntegratorError> {
    nonlinear_kick(st, h, h, m, rhs, kappa)
}

/// `n` steps of a symmetric method computed through the splitting
/// factorization `Φ_{h/2,L} Φ_{h/2,NL} (φ̂_h)^{n-1} Φ_{h/2,NL} Φ_{h/2,L}`
/// with `φ̂_h = Φ_{h/2,NL} Φ_{h,L} Φ_{h/2,NL}`.
pub fn compose_trajectory_via_splitting<N: Nonlinearity + ?Sized>(
    st: &PairState,
    h: f64,
    n_steps: usize,
    m: &MethodCoefficients,
    rhs: &mut N,
    kappa: f64,
) -> Result<PairState, IntegratorError> {
    if !m.symmetric {
        return Err(IntegratorError::NotSymmetric(m.name));
    }
    if n_steps == 0 {
        return Ok(st.clone());
    }
    let t0 = st.time;
    let mut s = splitting_linear_half(st, h);
    s = nonlinear_kick(&s, 0.5 * h, h, m, rhs, kappa)?;
    for _ in 1..n_steps {
        s = nonlinear_kick(&s, 0.5 * h, h, m, rhs, kappa)?;
        s = linear_flow(&s, h);
        s = nonlinear_kick(&s, 0.5 * h, h, m, rhs, kappa)?;
    }
    s = nonlinear_kick(&s, 0.5 * h, h, m, rhs, kappa)?;
    s = splitting_linear_half(&s, h);
    s.time = t0 + n_steps as f64 * h;
    Ok(s)
}

/// Flags non-finite states and states whose norm exceeds [`BLOW_UP_NORM`].
pub fn check_blow_up(st: &PairState, step: usize) -> Result<(), IntegratorError> {
    if !st.is_finite() {
        return Err(IntegratorError::NonFinite { step });
    }
    let norm = pair_norm(st, 0.0);
    if norm.is_nan() || norm > BLOW_UP_NORM {
        return Err(IntegratorError::BlowUp { step, norm });
    }
    Ok(())
}

/// Remainder `R = ⟨2Θ(hΩ)(u₁ - u₀ - v₁ + v₀), f̂(u_{1/2}) - f̂(v_{1/2})⟩₁`
/// of the one-step energy identity
/// `|||Δ₁|||₁² = |||Δ₀|||₁² + κR` for symmetric one-stage methods.
pub fn energy_remainder(
    integrator: &Integrator,
    u0: &PairState,
    u1: &StepOutcome,
    v0: &PairState,
    v1: &StepOutcome,
) -> Result<f64, IntegratorError> {
    let incr = u1.state.u.try_sub(&u0.u)?.try_sub(&v1.state.u.try_sub(&v0.u)?)?;
    let weighted = incr.scale_modes(&integrator.filters.theta).scale(2.0);
    let df = u1.rhs.try_sub(&v1.rhs)?;
    Ok(crate::spectral::scalar_product(&weighted, &df, 1.0)?)
}

/// Uniform samples of `[0, ξ_max]` used by the identity checks.
pub fn uniform_samples(xi_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| xi_max * i as f64 / (n - 1).max(1) as f64).collect()
}

/// A zero-valued right-hand side of matching degree.
pub fn zero_rhs(u: &SpectralField) -> Result<SpectralField, ProblemError> {
    Ok(SpectralField::zeros(u.degree()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Complex;
    use std::f64::consts::PI;

    fn rel_diff(a: &PairState, b: &PairState) -> f64 {
        pair_norm(&a.try_sub(b).unwrap(), 1.0) / pair_norm(b, 1.0).max(1e-300)
    }

    fn sample_state(k: usize) -> PairState {
        let u = SpectralField::from_fn(k, |j| Complex::new(1.0 / (1.0 + (j * j) as f64), 0.3 * j as f64 / (1.0 + (j * j * j * j) as f64)), true);
        let udot = SpectralField::from_fn(k, |j| Complex::new(0.5 / (1.0 + j.abs() as f64).powi(3), 0.0), true);
        PairState::new(u, udot, 0.0).unwrap()
    }

    #[test]
    fn ti1_at_zero() {
        let m = builtin_method(MethodName::TI1);
        assert_eq!(m.bbar1(0.0), 0.5);
        assert_eq!(m.b1(0.0), 1.0);
        assert_eq!(m.theta(0.0), 1.0);
        assert_eq!(m.c1, 0.5);
    }

    #[test]
    fn ti2_at_pi() {
        let m = builtin_method(MethodName::TI2);
        assert!(m.b1(PI).abs() < 1e-16);
    }

    #[test]
    fn ti1_symmetry_at_quarter_turn() {
        let m = builtin_method(MethodName::TI1);
        let xi = PI / 2.0;
        let lhs = sinc(xi) * m.b1(xi);
        let rhs = (1.0 + xi.cos()) * m.bbar1(xi);
        assert!((lhs - rhs).abs() < 1e-15, "{lhs} vs {rhs}");
    }

    #[test]
    fn method_names_parse() {
        assert_eq!("ti3".parse::<MethodName>().unwrap(), MethodName::TI3);
        assert!(matches!("TI4".parse::<MethodName>(), Err(IntegratorError::UnknownMethod(_))));
        assert!(!builtin_method(MethodName::NTI).symmetric);
        assert_eq!(builtin_method(MethodName::NTI).form, UpdateForm::KickDriftKick);
    }

    #[test]
    fn identities_hold_on_dense_grid() {
        let xs = uniform_samples(1e3, 10_000);
        for name in MethodName::ALL {
            let r = identity_residuals(&builtin_method(name), &xs);
            assert!(r.max() <= 1e-12, "{name}: {r:?}");
        }
    }

    #[test]
    fn linear_flow_examples() {
        let st = sample_state(5);
        assert_eq!(linear_flow(&st, 0.0).u, st.u);
        let one = SpectralField::from_modes(2, &[(0, Complex::new(1.0, 0.0))]);
        let st0 = PairState::new(one, SpectralField::zeros(2), 0.0).unwrap();
        let r = linear_flow(&st0, PI / 2.0);
        assert!(r.u.coeff(0).norm() < 1e-16);
        assert!((r.udot.coeff(0).re + 1.0).abs() < 1e-16);
        let back = linear_flow(&linear_flow(&st, 0.7), -0.7);
        assert!(rel_diff(&back, &st) < 1e-12);
    }

    #[test]
    fn linear_flow_conserves_mode_energy() {
        let st = sample_state(12);
        let out = linear_flow(&st, 3.3);
        for j in -12i64..=12 {
            let w = bracket(j);
            let e0 = w * w * st.u.coeff(j).norm_sqr() + st.udot.coeff(j).norm_sqr();
            let e1 = w * w * out.u.coeff(j).norm_sqr() + out.udot.coeff(j).norm_sqr();
            assert!((e0 - e1).abs() <= 1e-12 * e0);
        }
    }

    #[test]
    fn kappa_zero_step_is_linear_flow() {
        let st = sample_state(10);
        for name in MethodName::ALL {
            let m = builtin_method(name);
            let mut rhs = zero_rhs;
            let out = step(&st, 0.37, &m, &mut rhs, 0.0).unwrap();
            assert!(rel_diff(&out, &linear_flow(&st, 0.37)) < 1e-12, "{name}");
        }
    }

    #[test]
    fn splitting_maps() {
        let st = sample_state(6);
        assert_eq!(splitting_linear_half(&st, 0.0).u, st.u);
        assert_eq!(splitting_linear_half(&st, 0.4), linear_flow(&st, 0.2));
        let two = splitting_linear_half(&splitting_linear_half(&st, 0.4), 0.4);
        assert!(rel_diff(&two, &linear_flow(&st, 0.4)) < 1e-12);

        let m = builtin_method(MethodName::TI2);
        let mut cubic = |u: &SpectralField| Ok(u.scale(2.0));
        let kicked = splitting_nonlinear(&st, 0.3, &m, &mut cubic, 0.0).unwrap();
        assert_eq!(kicked, st);
        let kicked = splitting_nonlinear(&st, 0.3, &m, &mut cubic, 0.1).unwrap();
        assert_eq!(kicked.u, st.u);
        // TI2: increment is h sinc(hΩ) κ rhs(q)
        let expected = {
            let g = st.u.scale(2.0);
            let s = crate::spectral::apply_filter(&g, sinc, 0.3).unwrap();
            st.udot.try_add(&s.scale(0.3 * 0.1)).unwrap()
        };
        assert!((&kicked.udot - &expected).max_abs() < 1e-15);
    }

    #[test]
    fn compose_requires_symmetric_method() {
        let st = sample_state(4);
        let mut rhs = zero_rhs;
        let err = compose_trajectory_via_splitting(&st, 0.1, 2, &builtin_method(MethodName::NTI), &mut rhs, 0.1);
        assert!(matches!(err, Err(IntegratorError::NotSymmetric(MethodName::NTI))));
    }

    #[test]
    fn rhs_degree_is_checked() {
        let st = sample_state(4);
        let mut bad = |_: &SpectralField| Ok(SpectralField::zeros(3));
        let err = step(&st, 0.1, &builtin_method(MethodName::TI1), &mut bad, 0.1).unwrap_err();
        assert_eq!(err, IntegratorError::RhsDegree { expected: 4, got: 3 });
    }

    #[test]
    fn blow_up_detection() {
        let mut st = sample_state(3);
        assert!(check_blow_up(&st, 1).is_ok());
        st.u = st.u.scale(1e13);
        assert!(matches!(check_blow_up(&st, 7), Err(IntegratorError::BlowUp { step: 7, .. })));
        st.u.set(0, Complex::new(f64::NAN, 0.0));
        assert!(matches!(check_blow_up(&st, 9), Err(IntegratorError::NonFinite { step: 9 })));
    }

    #[test]
    fn assumption_report_records_grid() {
        let r = check_assumption1(&builtin_method(MethodName::TI3), 100.0, 1000).unwrap();
        assert_eq!(r.grid.samples, 1000);
        assert!(r.grid.points.len() >= 1999);
        assert!(r.passes(DEFAULT_BOUND_CONSTANT).iter().all(|&p| p));
        assert!(check_assumption1(&builtin_method(MethodName::TI3), -1.0, 1000).is_err());
    }
}
