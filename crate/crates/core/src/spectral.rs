//! Fourier-space representation of real 2π-periodic fields.
//!
//! A [`SpectralField`] of degree `K` stores the coefficients `c_j` of
//! `v(x) = Σ_{|j|≤K} c_j e^{ijx}` contiguously in the order `j = -K..=K`.
//! Transforms to and from grid values go through `rustfft`; the layout is
//! converted to the FFT-native wrap-around ordering only inside those calls.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Complex = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("degree mismatch: {left} vs {right}")]
    DegreeMismatch { left: usize, right: usize },
    #[error("degree must be at least 1")]
    ZeroDegree,
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientCount { expected: usize, got: usize },
    #[error("grid of {points} points cannot represent degree {degree} (need at least {})", 2 * degree + 1)]
    GridTooSmall { points: usize, degree: usize },
    #[error("interpolation at degree {degree} needs exactly {} samples, got {got}", 2 * degree + 1)]
    SampleCount { degree: usize, got: usize },
    #[error("filter is not finite on mode {mode} (argument {xi})")]
    NonFiniteFilter { mode: i64, xi: f64 },
}

/// `sin(x)/x`, with the removable singularity at zero handled by a Taylor branch.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Japanese bracket `⟨j⟩ = √(j²+1)`, the eigenvalue of `Ω = √(1-∂x²)` on mode `j`.
#[inline]
pub fn bracket(j: i64) -> f64 {
    let j = j as f64;
    (j * j + 1.0).sqrt()
}

/// Spectrum of `Ω` on the modes `-K..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpectrum {
    degree: usize,
    weights: Vec<f64>,
}

impl OperatorSpectrum {
    pub fn new(degree: usize) -> Self {
        let k = degree as i64;
        let weights = (-k..=k).map(bracket).collect();
        Self { degree, weights }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Weights in storage order (`j = -K..=K`).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, j: i64) -> f64 {
        self.weights[(j + self.degree as i64) as usize]
    }

    /// Tabulates `χ(h⟨j⟩)` in storage order.
    pub fn tabulate<F: Fn(f64) -> f64>(&self, chi: F, h: f64) -> Result<Vec<f64>, SpectralError> {
        let k = self.degree as i64;
        self.weights
            .iter()
            .zip(-k..=k)
            .map(|(&w, j)| {
                let xi = h * w;
                let value = chi(xi);
                if value.is_finite() {
                    Ok(value)
                } else {
                    Err(SpectralError::NonFiniteFilter { mode: j, xi })
                }
            })
            .collect()
    }
}

/// Complex Fourier coefficients of a 2π-periodic function of degree `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    degree: usize,
    coeffs: Vec<Complex>,
}

impl SpectralField {
    pub fn zeros(degree: usize) -> Self {
        Self {
            degree,
            coeffs: vec![Complex::new(0.0, 0.0); 2 * degree + 1],
        }
    }

    /// Builds a field from coefficients in storage order `j = -K..=K`.
    ///
    /// With `real` set, the coefficients are symmetrized once so that
    /// `c_{-j} = conj(c_j)` holds exactly.
    pub fn from_coeffs(degree: usize, coeffs: Vec<Complex>, real: bool) -> Result<Self, SpectralError> {
        if coeffs.len() != 2 * degree + 1 {
            return Err(SpectralError::CoefficientCount {
                expected: 2 * degree + 1,
                got: coeffs.len(),
            });
        }
        let mut field = Self { degree, coeffs };
        if real {
            field.symmetrize();
        }
        Ok(field)
    }

    /// Builds a field by evaluating `gen(j)` for every mode.
    pub fn from_fn<F: FnMut(i64) -> Complex>(degree: usize, mut gen: F, real: bool) -> Self {
        let k = degree as i64;
        let coeffs = (-k..=k).map(&mut gen).collect();
        let mut field = Self { degree, coeffs };
        if real {
            field.symmetrize();
        }
        field
    }

    /// Field with the listed `(j, c_j)` entries set and all others zero.
    /// Modes outside `-K..=K` are ignored.
    pub fn from_modes(degree: usize, modes: &[(i64, Complex)]) -> Self {
        let mut field = Self::zeros(degree);
        for &(j, c) in modes {
            if j.unsigned_abs() as usize <= degree {
                field.set(j, c);
            }
        }
        field
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex] {
        &mut self.coeffs
    }

    #[inline]
    fn index(&self, j: i64) -> usize {
        (j + self.degree as i64) as usize
    }

    pub fn coeff(&self, j: i64) -> Complex {
        if j.unsigned_abs() as usize > self.degree {
            Complex::new(0.0, 0.0)
        } else {
            self.coeffs[self.index(j)]
        }
    }

    pub fn set(&mut self, j: i64, c: Complex) {
        let idx = self.index(j);
        self.coeffs[idx] = c;
    }

    /// `(j, c_j)` pairs in storage order.
    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex)> + '_ {
        let k = self.degree as i64;
        (-k..=k).zip(self.coeffs.iter().copied())
    }

    /// Replaces `c_j` and `c_{-j}` by the Hermitian average of the pair.
    pub fn symmetrize(&mut self) {
        let k = self.degree;
        self.coeffs[k].im = 0.0;
        for j in 1..=k {
            let plus = self.coeffs[k + j];
            let minus = self.coeffs[k - j];
            let avg = (plus + minus.conj()) * 0.5;
            self.coeffs[k + j] = avg;
            self.coeffs[k - j] = avg.conj();
        }
    }

    /// Largest deviation `|c_{-j} - conj(c_j)|` over all modes.
    pub fn hermitian_defect(&self) -> f64 {
        let k = self.degree;
        (0..=k)
            .map(|j| (self.coeffs[k - j] - self.coeffs[k + j].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.hermitian_defect() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Mode-wise multiplication by a table in storage order.
    pub fn scale_modes(&self, table: &[f64]) -> Self {
        debug_assert_eq!(table.len(), self.coeffs.len());
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().zip(table).map(|(c, t)| c * t).collect(),
        }
    }

    /// `self += alpha * table ⊙ other`, mode-wise.
    pub fn add_scaled_modes(&mut self, alpha: f64, table: &[f64], other: &SpectralField) {
        debug_assert_eq!(self.degree, other.degree);
        for ((c, t), o) in self.coeffs.iter_mut().zip(table).zip(&other.coeffs) {
            *c += o * (alpha * t);
        }
    }

    pub fn try_add(&self, other: &SpectralField) -> Result<Self, SpectralError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &SpectralField) -> Result<Self, SpectralError> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with<F: Fn(Complex, Complex) -> Complex>(
        &self,
        other: &SpectralField,
        op: F,
    ) -> Result<Self, SpectralError> {
        check_degrees(self.degree, other.degree)?;
        Ok(Self {
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(&a, &b)| op(a, b))
                .collect(),
        })
    }
}

fn check_degrees(left: usize, right: usize) -> Result<(), SpectralError> {
    if left == right {
        Ok(())
    } else {
        Err(SpectralError::DegreeMismatch { left, right })
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        self.try_add(rhs).expect("degree mismatch in field addition")
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        self.try_sub(rhs).expect("degree mismatch in field subtraction")
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

/// Position/velocity pair `(u, ∂t u)` at model time `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairState {
    pub u: SpectralField,
    pub udot: SpectralField,
    pub time: f64,
}

impl PairState {
    pub fn new(u: SpectralField, udot: SpectralField, time: f64) -> Result<Self, SpectralError> {
        check_degrees(u.degree(), udot.degree())?;
        Ok(Self { u, udot, time })
    }

    pub fn zeros(degree: usize) -> Self {
        Self {
            u: SpectralField::zeros(degree),
            udot: SpectralField::zeros(degree),
            time: 0.0,
        }
    }

    pub fn degree(&self) -> usize {
        self.u.degree()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.udot.is_finite()
    }

    /// Component-wise difference; the time of `self` is kept.
    pub fn try_sub(&self, other: &PairState) -> Result<PairState, SpectralError> {
        Ok(PairState {
            u: self.u.try_sub(&other.u)?,
            udot: self.udot.try_sub(&other.udot)?,
            time: self.time,
        })
    }

    pub fn try_add(&self, other: &PairState) -> Result<PairState, SpectralError> {
        Ok(PairState {
            u: self.u.try_add(&other.u)?,
            udot: self.udot.try_add(&other.udot)?,
            time: self.time,
        })
    }

    /// Zero-pads or truncates both components to `degree`.
    pub fn project(&self, degree: usize) -> PairState {
        PairState {
            u: project(&self.u, degree),
            udot: project(&self.udot, degree),
            time: self.time,
        }
    }
}

/// `‖v‖_s = (Σ_j ⟨j⟩^{2s} |c_j|²)^{1/2}`.
pub fn sobolev_norm(v: &SpectralField, s: f64) -> f64 {
    v.modes()
        .map(|(j, c)| bracket(j).powf(2.0 * s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// `⟨v, w⟩_s = Σ_j ⟨j⟩^{2s} conj(v_j) w_j` as a complex number.
pub fn scalar_product_complex(v: &SpectralField, w: &SpectralField, s: f64) -> Result<Complex, SpectralError> {
    check_degrees(v.degree(), w.degree())?;
    Ok(v.modes()
        .zip(w.coeffs())
        .map(|((j, a), b)| a.conj() * b * bracket(j).powf(2.0 * s))
        .sum())
}

/// Real part of the weighted scalar product. Exact for Hermitian-symmetric
/// inputs, whose product has vanishing imaginary part.
pub fn scalar_product(v: &SpectralField, w: &SpectralField, s: f64) -> Result<f64, SpectralError> {
    scalar_product_complex(v, w, s).map(|z| z.re)
}

/// `|||(u, u̇)|||_s = (‖u‖²_{s+1} + ‖u̇‖²_s)^{1/2}`.
pub fn pair_norm(st: &PairState, s: f64) -> f64 {
    let a = sobolev_norm(&st.u, s + 1.0);
    let b = sobolev_norm(&st.udot, s);
    (a * a + b * b).sqrt()
}

/// L²-orthogonal projection onto degree `degree`, zero-padding when the
/// target is larger than the source.
pub fn project(v: &SpectralField, degree: usize) -> SpectralField {
    let k = degree.min(v.degree()) as i64;
    let mut out = SpectralField::zeros(degree);
    for j in -k..=k {
        out.set(j, v.coeff(j));
    }
    out
}

/// Multiplies mode `j` by `(ij)^order`.
pub fn differentiate(v: &SpectralField, order: u32) -> SpectralField {
    let k = v.degree() as i64;
    let coeffs = (-k..=k)
        .zip(v.coeffs())
        .map(|(j, &c)| c * Complex::new(0.0, j as f64).powu(order))
        .collect();
    SpectralField {
        degree: v.degree(),
        coeffs,
    }
}

/// Applies the operator function `χ(hΩ)` mode-wise.
///
/// `h` may be negative; the argument passed to `χ` is `h⟨j⟩`.
pub fn apply_filter<F: Fn(f64) -> f64>(v: &SpectralField, chi: F, h: f64) -> Result<SpectralField, SpectralError> {
    let table = OperatorSpectrum::new(v.degree()).tabulate(chi, h)?;
    Ok(v.scale_modes(&table))
}

/// Cached FFT plans for the transforms used by synthesis and interpolation.
pub struct FourierTransform {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
    buffer: Vec<Complex>,
}

impl Default for FourierTransform {
    fn default() -> Self {
        Self::new()
    }
}

impl std::fmt::Debug for FourierTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierTransform")
            .field("forward_sizes", &self.forward.keys().collect::<Vec<_>>())
            .field("inverse_sizes", &self.inverse.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl FourierTransform {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
            buffer: Vec::new(),
        }
    }

    fn inverse_plan(&mut self, n: usize) -> Arc<dyn Fft<f64>> {
        let planner = &mut self.planner;
        self.inverse
            .entry(n)
            .or_insert_with(|| planner.plan_fft_inverse(n))
            .clone()
    }

    fn forward_plan(&mut self, n: usize) -> Arc<dyn Fft<f64>> {
        let planner = &mut self.planner;
        self.forward
            .entry(n)
            .or_insert_with(|| planner.plan_fft_forward(n))
            .clone()
    }

    /// Complex grid values `v(2πm/M)`, `m = 0..M`.
    pub fn synthesize_complex(&mut self, v: &SpectralField, points: usize, out: &mut Vec<Complex>) -> Result<(), SpectralError> {
        let k = v.degree();
        if points < 2 * k + 1 {
            return Err(SpectralError::GridTooSmall { points, degree: k });
        }
        out.clear();
        out.resize(points, Complex::new(0.0, 0.0));
        for (j, c) in v.modes() {
            out[j.rem_euclid(points as i64) as usize] = c;
        }
        let plan = self.inverse_plan(points);
        plan.process(out);
        Ok(())
    }

    /// Real grid values `v(2πm/M)`; the imaginary residue is dropped.
    pub fn synthesize_into(&mut self, v: &SpectralField, points: usize, out: &mut Vec<f64>) -> Result<(), SpectralError> {
        let mut buffer = std::mem::take(&mut self.buffer);
        let res = self.synthesize_complex(v, points, &mut buffer);
        if res.is_ok() {
            out.clear();
            out.extend(buffer.iter().map(|z| z.re));
        }
        self.buffer = buffer;
        res
    }

    /// Discrete Fourier coefficients of `samples`, truncated to `degree`.
    ///
    /// With `samples.len() == 2K+1` this is trigonometric interpolation; with
    /// more samples it is the truncation of the exact DFT, which equals the
    /// L² projection whenever the sampled function is a trigonometric
    /// polynomial of degree below `samples.len() - K`.
    pub fn analyze(&mut self, samples: &[f64], degree: usize) -> Result<SpectralField, SpectralError> {
        let n = samples.len();
        if n < 2 * degree + 1 {
            return Err(SpectralError::GridTooSmall { points: n, degree });
        }
        let mut buffer = std::mem::take(&mut self.buffer);
        buffer.clear();
        buffer.extend(samples.iter().map(|&x| Complex::new(x, 0.0)));
        let plan = self.forward_plan(n);
        plan.process(&mut buffer);
        let scale = 1.0 / n as f64;
        let field = SpectralField::from_fn(
            degree,
            |j| buffer[j.rem_euclid(n as i64) as usize] * scale,
            true,
        );
        self.buffer = buffer;
        Ok(field)
    }

    pub fn interpolate(&mut self, samples: &[f64], degree: usize) -> Result<SpectralField, SpectralError> {
        if samples.len() != 2 * degree + 1 {
            return Err(SpectralError::SampleCount {
                degree,
                got: samples.len(),
            });
        }
        self.analyze(samples, degree)
    }
}

/// Grid values `v(2πm/M)` for `m = 0..M` with `M ≥ 2K+1`.
pub fn synthesize(v: &SpectralField, points: usize) -> Result<Vec<f64>, SpectralError> {
    let mut out = Vec::with_capacity(points);
    FourierTransform::new().synthesize_into(v, points, &mut out)?;
    Ok(out)
}

/// Degree-`K` trigonometric interpolant of `2K+1` equispaced samples.
pub fn interpolate(samples: &[f64], degree: usize) -> Result<SpectralField, SpectralError> {
    FourierTransform::new().interpolate(samples, degree)
}

/// Canonical interpolation nodes `2πm/N`.
pub fn grid_points(points: usize) -> Vec<f64> {
    (0..points).map(|m| 2.0 * PI * m as f64 / points as f64).collect()
}
