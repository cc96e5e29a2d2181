//! Problem definitions and the full-discrete nonlinearity
//! `f̂^K(u) = P^K(a^K(u) ∂x²u + g^K(u, ∂xu))` with `a^K = I^K∘a`, `g^K = I^K∘g`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{differentiate, Complex, FourierTransform, PairState, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (expected gauckler_test, linear or custom-polynomial)")]
    UnknownProblem(String),
    #[error("problem `custom-polynomial` needs explicit `a` and `g` coefficient lists")]
    MissingCoefficients,
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("non-finite value of {what} at grid point {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("nonlinearity degree {got} does not match workspace degree {expected}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Maps a degree-`K` field to a degree-`K` field; the right-hand side seen by
/// the integrators, without the `κ` prefactor.
pub trait Nonlinearity {
    fn evaluate(&mut self, u: &SpectralField) -> Result<SpectralField, ProblemError>;
}

impl<F> Nonlinearity for F
where
    F: FnMut(&SpectralField) -> Result<SpectralField, ProblemError>,
{
    fn evaluate(&mut self, u: &SpectralField) -> Result<SpectralField, ProblemError> {
        self(u)
    }
}

/// `a(u) = Σ_k c_k u^k`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub u_power: u32,
    pub ux_power: u32,
    pub coeff: f64,
}

/// `g(u, v) = Σ coeff · u^p v^q` over the listed monomials.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BivariatePolynomial(pub Vec<Monomial>);

impl BivariatePolynomial {
    pub fn eval(&self, u: f64, ux: f64) -> f64 {
        self.0
            .iter()
            .map(|m| m.coeff * u.powi(m.u_power as i32) * ux.powi(m.ux_power as i32))
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|m| m.coeff == 0.0)
    }
}

/// Generator of real, even-in-`j` initial Fourier coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientGenerator {
    /// `amplitude / √(1 + |j|^exponent)`.
    PowerDecay { amplitude: f64, exponent: f64 },
    /// `values[|j|]`, zero beyond the list.
    Modes { values: Vec<f64> },
    Zero,
}

impl CoefficientGenerator {
    pub fn coefficient(&self, j: i64) -> f64 {
        let aj = j.unsigned_abs();
        match self {
            Self::PowerDecay { amplitude, exponent } => amplitude / (1.0 + (aj as f64).powf(*exponent)).sqrt(),
            Self::Modes { values } => values.get(aj as usize).copied().unwrap_or(0.0),
            Self::Zero => 0.0,
        }
    }

    pub fn field(&self, degree: usize) -> SpectralField {
        SpectralField::from_fn(degree, |j| Complex::new(self.coefficient(j), 0.0), true)
    }
}

/// A quasilinear wave problem `u_tt = u_xx - u + κ a(u) u_xx + κ g(u, u_x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub name: String,
    pub kappa: f64,
    pub a: Polynomial,
    pub g: BivariatePolynomial,
    pub initial_u: CoefficientGenerator,
    pub initial_udot: CoefficientGenerator,
}

pub const GAUCKLER_TEST: &str = "gauckler_test";
pub const LINEAR: &str = "linear";
pub const CUSTOM_POLYNOMIAL: &str = "custom-polynomial";

fn gauckler_initial_data() -> (CoefficientGenerator, CoefficientGenerator) {
    (
        CoefficientGenerator::PowerDecay {
            amplitude: 1.0,
            exponent: 11.0 + 1.0 / 50.0,
        },
        CoefficientGenerator::PowerDecay {
            amplitude: 1.0,
            exponent: 9.0 + 1.0 / 50.0,
        },
    )
}

impl ProblemSpec {
    /// Validates `a(0) = 0`, `g(0, 0) = 0` and finiteness of all parameters.
    pub fn new(
        name: impl Into<String>,
        kappa: f64,
        a: Polynomial,
        g: BivariatePolynomial,
        initial_u: CoefficientGenerator,
        initial_udot: CoefficientGenerator,
    ) -> Result<Self, ProblemError> {
        let spec = Self {
            name: name.into(),
            kappa,
            a,
            g,
            initial_u,
            initial_udot,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !self.kappa.is_finite() {
            return Err(ProblemError::Invalid(format!("kappa must be finite, got {}", self.kappa)));
        }
        if self.a.0.iter().any(|c| !c.is_finite()) || self.g.0.iter().any(|m| !m.coeff.is_finite()) {
            return Err(ProblemError::Invalid("polynomial coefficients must be finite".into()));
        }
        if self.a.eval(0.0) != 0.0 {
            return Err(ProblemError::Invalid(format!("a(0) = {} but must vanish", self.a.eval(0.0))));
        }
        if self.g.eval(0.0, 0.0) != 0.0 {
            return Err(ProblemError::Invalid(format!(
                "g(0,0) = {} but must vanish",
                self.g.eval(0.0, 0.0)
            )));
        }
        for (label, gen) in [("initial_u", &self.initial_u), ("initial_udot", &self.initial_udot)] {
            let ok = match gen {
                CoefficientGenerator::PowerDecay { amplitude, exponent } => amplitude.is_finite() && exponent.is_finite(),
                CoefficientGenerator::Modes { values } => values.iter().all(|v| v.is_finite()),
                CoefficientGenerator::Zero => true,
            };
            if !ok {
                return Err(ProblemError::Invalid(format!("{label} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// A problem whose `a` and `g` are given as coefficient lists.
    pub fn custom_polynomial(
        kappa: f64,
        a: Polynomial,
        g: BivariatePolynomial,
        initial: Option<(CoefficientGenerator, CoefficientGenerator)>,
    ) -> Result<Self, ProblemError> {
        let (u0, v0) = initial.unwrap_or_else(gauckler_initial_data);
        Self::new(CUSTOM_POLYNOMIAL, kappa, a, g, u0, v0)
    }

    pub fn is_linear(&self) -> bool {
        self.a.is_zero() && self.g.is_zero()
    }
}

/// Registry of named problems. `custom-polynomial` has no default
/// coefficients and must be built with [`ProblemSpec::custom_polynomial`].
pub fn builtin_problem(name: &str, kappa: f64) -> Result<ProblemSpec, ProblemError> {
    let (u0, v0) = gauckler_initial_data();
    match name {
        GAUCKLER_TEST => ProblemSpec::new(
            GAUCKLER_TEST,
            kappa,
            Polynomial(vec![0.0, 1.0]),
            // (∂x u)² + κ u³, with κ appearing a second time as in the test case.
            BivariatePolynomial(vec![
                Monomial {
                    u_power: 0,
                    ux_power: 2,
                    coeff: 1.0,
                },
                Monomial {
                    u_power: 3,
                    ux_power: 0,
                    coeff: kappa,
                },
            ]),
            u0,
            v0,
        ),
        LINEAR => ProblemSpec::new(LINEAR, kappa, Polynomial::default(), BivariatePolynomial::default(), u0, v0),
        CUSTOM_POLYNOMIAL => Err(ProblemError::MissingCoefficients),
        other => Err(ProblemError::UnknownProblem(other.to_string())),
    }
}

/// `(P^K u₀, P^K u̇₀)` at time zero.
pub fn discretize_initial_data(p: &ProblemSpec, degree: usize) -> PairState {
    PairState {
        u: p.initial_u.field(degree),
        udot: p.initial_udot.field(degree),
        time: 0.0,
    }
}

/// Smallest integer `≥ n` whose only prime factors are 2, 3 and 5.
pub fn fft_friendly(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Per-trajectory scratch for [`eval_fhat_k`].
#[derive(Debug)]
pub struct NonlinearityWorkspace {
    degree: usize,
    padded: usize,
    fft: FourierTransform,
    u_grid: Vec<f64>,
    ux_grid: Vec<f64>,
    pointwise: Vec<f64>,
    a_padded: Vec<f64>,
    uxx_padded: Vec<f64>,
    a_range: Option<(f64, f64)>,
}

impl NonlinearityWorkspace {
    pub fn new(degree: usize) -> Self {
        Self {
            degree,
            padded: fft_friendly(4 * degree + 2),
            fft: FourierTransform::new(),
            u_grid: Vec::new(),
            ux_grid: Vec::new(),
            pointwise: Vec::new(),
            a_padded: Vec::new(),
            uxx_padded: Vec::new(),
            a_range: None,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Size of the dealiasing grid for the `a^K(u) ∂x²u` product.
    pub fn padded_points(&self) -> usize {
        self.padded
    }

    /// `(min, max)` of `a(u)` on the interpolation grid at the last evaluation.
    pub fn last_a_range(&self) -> Option<(f64, f64)> {
        self.a_range
    }
}

/// Evaluates `f̂^K(u)`.
///
/// `a(u)` and `g(u, ∂xu)` are interpolated at the `2K+1` canonical nodes.
/// The product `a^K(u) ∂x²u` has degree `2K` and is formed on the padded
/// grid before truncation, so it is projected without aliasing.
pub fn eval_fhat_k(u: &SpectralField, p: &ProblemSpec, ws: &mut NonlinearityWorkspace) -> Result<SpectralField, ProblemError> {
    let k = ws.degree;
    if u.degree() != k {
        return Err(ProblemError::DegreeMismatch {
            expected: k,
            got: u.degree(),
        });
    }
    let n = 2 * k + 1;
    let has_a = !p.a.is_zero();
    let has_g = !p.g.is_zero();
    let mut out = SpectralField::zeros(k);
    if !has_a && !has_g {
        return Ok(out);
    }

    ws.fft.synthesize_into(u, n, &mut ws.u_grid)?;

    if has_a {
        ws.pointwise.clear();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (index, &x) in ws.u_grid.iter().enumerate() {
            let value = p.a.eval(x);
            if !value.is_finite() {
                return Err(ProblemError::NonFinite { what: "a(u)", index });
            }
            lo = lo.min(value);
            hi = hi.max(value);
            ws.pointwise.push(value);
        }
        ws.a_range = Some((lo, hi));
        let a_k = ws.fft.interpolate(&ws.pointwise, k)?;
        let uxx = differentiate(u, 2);
        ws.fft.synthesize_into(&a_k, ws.padded, &mut ws.a_padded)?;
        ws.fft.synthesize_into(&uxx, ws.padded, &mut ws.uxx_padded)?;
        for (a, b) in ws.a_padded.iter_mut().zip(&ws.uxx_padded) {
            *a *= b;
        }
        out = ws.fft.analyze(&ws.a_padded, k)?;
    } else {
        ws.a_range = None;
    }

    if has_g {
        let ux = differentiate(u, 1);
        ws.fft.synthesize_into(&ux, n, &mut ws.ux_grid)?;
        ws.pointwise.clear();
        for (index, (&x, &dx)) in ws.u_grid.iter().zip(&ws.ux_grid).enumerate() {
            let value = p.g.eval(x, dx);
            if !value.is_finite() {
                return Err(ProblemError::NonFinite { what: "g(u, ux)", index });
            }
            ws.pointwise.push(value);
        }
        let g_k = ws.fft.interpolate(&ws.pointwise, k)?;
        out = out.try_add(&g_k)?;
    }
    out.symmetrize();
    Ok(out)
}

/// A problem bound to its workspace, usable as an integrator right-hand side.
#[derive(Debug)]
pub struct DiscreteNonlinearity<'a> {
    pub problem: &'a ProblemSpec,
    pub workspace: NonlinearityWorkspace,
}

impl<'a> DiscreteNonlinearity<'a> {
    pub fn new(problem: &'a ProblemSpec, degree: usize) -> Self {
        Self {
            problem,
            workspace: NonlinearityWorkspace::new(degree),
        }
    }
}

impl Nonlinearity for DiscreteNonlinearity<'_> {
    fn evaluate(&mut self, u: &SpectralField) -> Result<SpectralField, ProblemError> {
        eval_fhat_k(u, self.problem, &mut self.workspace)
    }
}
