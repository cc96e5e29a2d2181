//! Independent reference implementations used by the integration tests.
//!
//! Everything here works by direct summation of trigonometric series, with
//! no FFTs, so it shares no code paths with the library's transforms.

#![allow(dead_code)]

use std::f64::consts::PI;

use qlwave::problem::{BivariatePolynomial, Monomial, Polynomial, ProblemSpec};
use qlwave::spectral::{Complex, PairState, SpectralField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∂x^d v` at `x`, real part of the direct sum.
pub fn eval_series(v: &SpectralField, x: f64, d: u32) -> f64 {
    let mut sum = Complex::new(0.0, 0.0);
    for (j, c) in v.modes() {
        let factor = Complex::new(0.0, j as f64).powu(d);
        sum += c * factor * Complex::from_polar(1.0, j as f64 * x);
    }
    sum.re
}

/// Degree-`K` trigonometric interpolant of `f` sampled at `2K+1` points,
/// by direct DFT sums.
pub fn interpolate_direct(samples: &[f64], degree: usize) -> SpectralField {
    let n = samples.len();
    assert_eq!(n, 2 * degree + 1);
    SpectralField::from_fn(
        degree,
        |j| {
            let mut c = Complex::new(0.0, 0.0);
            for (m, &f) in samples.iter().enumerate() {
                c += f * Complex::from_polar(1.0, -(j as f64) * 2.0 * PI * m as f64 / n as f64);
            }
            c / n as f64
        },
        false,
    )
}

/// Fourier coefficients `|j| ≤ K` of `x ↦ f(x)` by the trapezoidal rule on
/// `q` points; exact for trigonometric polynomials of degree `< q - K`.
pub fn quadrature_coeffs<F: Fn(f64) -> f64>(f: F, degree: usize, q: usize) -> SpectralField {
    let values: Vec<f64> = (0..q).map(|m| f(2.0 * PI * m as f64 / q as f64)).collect();
    SpectralField::from_fn(
        degree,
        |j| {
            let mut c = Complex::new(0.0, 0.0);
            for (m, &v) in values.iter().enumerate() {
                c += v * Complex::from_polar(1.0, -(j as f64) * 2.0 * PI * m as f64 / q as f64);
            }
            c / q as f64
        },
        false,
    )
}

/// `P^K(I^K(a(u)) ∂x²u + I^K(g(u, ∂xu)))`.
pub fn fhat_oracle(u: &SpectralField, p: &ProblemSpec) -> SpectralField {
    let k = u.degree();
    let n = 2 * k + 1;
    let grid: Vec<f64> = (0..n).map(|m| 2.0 * PI * m as f64 / n as f64).collect();
    let a_k = interpolate_direct(&grid.iter().map(|&x| p.a.eval(eval_series(u, x, 0))).collect::<Vec<_>>(), k);
    let g_k = interpolate_direct(
        &grid
            .iter()
            .map(|&x| p.g.eval(eval_series(u, x, 0), eval_series(u, x, 1)))
            .collect::<Vec<_>>(),
        k,
    );
    let product = quadrature_coeffs(|x| eval_series(&a_k, x, 0) * eval_series(u, x, 2), k, 16 * k.max(1) + 1);
    product.try_add(&g_k).unwrap()
}

pub fn relative_l2(a: &SpectralField, b: &SpectralField) -> f64 {
    let diff = a.try_sub(b).unwrap();
    let scale = qlwave::sobolev_norm(b, 0.0);
    if scale == 0.0 {
        qlwave::sobolev_norm(&diff, 0.0)
    } else {
        qlwave::sobolev_norm(&diff, 0.0) / scale
    }
}

pub fn relative_pair(a: &PairState, b: &PairState) -> f64 {
    qlwave::pair_norm(&a.try_sub(b).unwrap(), 1.0) / qlwave::pair_norm(b, 1.0)
}

/// Random real field with `|ĉ_j| ≤ amplitude / (1 + j²)`.
pub fn random_field(rng: &mut ChaCha8Rng, degree: usize, amplitude: f64) -> SpectralField {
    SpectralField::from_fn(
        degree,
        |j| {
            let decay = amplitude / (1.0 + (j * j) as f64);
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * decay
        },
        true,
    )
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A quasilinear test problem with richer polynomials than the builtin ones.
pub fn custom_problem(kappa: f64) -> ProblemSpec {
    ProblemSpec::custom_polynomial(
        kappa,
        Polynomial(vec![0.0, 0.5, -0.3, 0.1]),
        BivariatePolynomial(vec![
            Monomial {
                u_power: 1,
                ux_power: 1,
                coeff: 1.0,
            },
            Monomial {
                u_power: 2,
                ux_power: 2,
                coeff: -0.25,
            },
            Monomial {
                u_power: 0,
                ux_power: 3,
                coeff: 0.2,
            },
        ]),
        None,
    )
    .unwrap()
}
