//! Trigonometric integrators with Fourier spectral Galerkin discretization for
//! the 1D periodic quasilinear wave equation
//!
//! ```text
//! ∂t²u = ∂x²u - u + κ a(u) ∂x²u + κ g(u, ∂xu),   x ∈ ℝ/2πℤ
//! ```
//!
//! together with a convergence-study harness and a command-line front end.

pub mod cli;
pub mod harness;
pub mod integrators;
pub mod problem;
pub mod spectral;

pub use integrators::{builtin_method, Integrator, MethodCoefficients, MethodName};
pub use problem::{builtin_problem, discretize_initial_data, eval_fhat_k, NonlinearityWorkspace, ProblemSpec};
pub use spectral::{pair_norm, sobolev_norm, PairState, SpectralField};
