//! Trajectory driver and convergence studies.
//!
//! Errors are measured in `H² × H¹`, i.e. `|||·|||₁`, against self-convergence
//! references computed with TI3 at a refined step size and the same spatial
//! degree, so that temporal studies see no spatial error.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrators::{builtin_method, check_blow_up, energy_remainder, Integrator, IntegratorError, MethodName, UpdateForm};
use crate::problem::{discretize_initial_data, DiscreteNonlinearity, ProblemError, ProblemSpec};
use crate::spectral::{pair_norm, Complex, PairState, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{method} blew up at step {step} (t = {time}): {source}")]
    BlowUp {
        method: MethodName,
        step: usize,
        time: f64,
        source: IntegratorError,
    },
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Number of steps of size `h` covering `[0, T]`; `h` must divide `T` to round-off.
pub fn step_count(h: f64, final_time: f64) -> Result<usize, HarnessError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(HarnessError::Config(format!("step size must be positive, got {h}")));
    }
    if !final_time.is_finite() || final_time <= 0.0 {
        return Err(HarnessError::Config(format!("final time must be positive, got {final_time}")));
    }
    let n = (final_time / h).round();
    if n < 1.0 || (n * h - final_time).abs() >= 1e-12 * final_time {
        return Err(HarnessError::Config(format!("step size {h} does not divide final time {final_time}")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Track `min(1 + κ a(u))` over the interpolation grid at every stage.
    #[serde(default)]
    pub hyperbolicity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: MethodName,
    pub degree: usize,
    pub h: f64,
    pub final_time: f64,
    pub problem: ProblemSpec,
    pub record_every: usize,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

impl RunConfig {
    pub fn new(method: MethodName, degree: usize, h: f64, final_time: f64, problem: ProblemSpec) -> Self {
        Self {
            method,
            degree,
            h,
            final_time,
            problem,
            record_every: usize::MAX,
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn kappa(&self) -> f64 {
        self.problem.kappa
    }

    pub fn n_steps(&self) -> Result<usize, HarnessError> {
        step_count(self.h, self.final_time)
    }

    pub fn validate(&self) -> Result<usize, HarnessError> {
        if self.degree == 0 {
            return Err(SpectralError::ZeroDegree.into());
        }
        if self.record_every == 0 {
            return Err(HarnessError::Config("record_every must be at least 1".into()));
        }
        self.problem.validate()?;
        self.n_steps()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub step: usize,
    pub time: f64,
    /// `|||·|||_s` for `s = 0, 1, 2`.
    pub norms: [f64; 3],
}

impl NormSample {
    fn of(step: usize, st: &PairState) -> Self {
        Self {
            step,
            time: st.time,
            norms: [pair_norm(st, 0.0), pair_norm(st, 1.0), pair_norm(st, 2.0)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowUpInfo {
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    /// Final state, or the last finite state before a blow-up.
    pub final_state: PairState,
    pub samples: Vec<NormSample>,
    pub wall_time_s: f64,
    pub blow_up: Option<BlowUpInfo>,
    /// `min(1 + κ a(u_{n+1/2}))` over the run, when monitored.
    pub min_hyperbolicity: Option<f64>,
}

/// Advances `start` by `n_steps` steps of `method`, calling `observe` after each.
fn integrate<F>(
    problem: &ProblemSpec,
    method: MethodName,
    degree: usize,
    h: f64,
    n_steps: usize,
    start: PairState,
    mut observe: F,
) -> Result<PairState, Box<(PairState, HarnessError)>>
where
    F: FnMut(usize, &PairState, &DiscreteNonlinearity<'_>),
{
    let integrator = match Integrator::new(builtin_method(method), h, problem.kappa, degree) {
        Ok(i) => i,
        Err(e) => return Err(Box::new((start, e.into()))),
    };
    let mut rhs = DiscreteNonlinearity::new(problem, degree);
    let mut st = start;
    for n in 1..=n_steps {
        let next = integrator
            .step(&st, &mut rhs)
            .map_err(|e| match e {
                IntegratorError::NonFinite { .. } => IntegratorError::NonFinite { step: n },
                other => other,
            })
            .and_then(|next| check_blow_up(&next, n).map(|_| next));
        match next {
            Ok(next) => {
                st = next;
                observe(n, &st, &rhs);
            }
            Err(source) => {
                let time = st.time;
                return Err(Box::new((
                    st,
                    HarnessError::BlowUp {
                        method,
                        step: n,
                        time,
                        source,
                    },
                )));
            }
        }
    }
    Ok(st)
}

/// Runs one trajectory. Numerical blow-up is recorded in the returned
/// record; only configuration errors are returned as `Err`.
pub fn run_trajectory_record(cfg: &RunConfig) -> Result<RunRecord, HarnessError> {
    let n_steps = cfg.validate()?;
    if cfg.h < cfg.kappa().abs() {
        log::warn!(
            "step size {} is below kappa = {}; the error bounds assume kappa ≲ h",
            cfg.h,
            cfg.kappa()
        );
    }
    let started = Instant::now();
    let initial = discretize_initial_data(&cfg.problem, cfg.degree);
    let mut samples = vec![NormSample::of(0, &initial)];
    let kappa = cfg.kappa();
    let mut min_hyp: Option<f64> = None;
    let monitor = cfg.diagnostics.hyperbolicity && !cfg.problem.a.is_zero();
    let outcome = integrate(&cfg.problem, cfg.method, cfg.degree, cfg.h, n_steps, initial, |n, st, rhs| {
        if n % cfg.record_every == 0 || n == n_steps {
            samples.push(NormSample::of(n, st));
        }
        if monitor {
            if let Some((lo, hi)) = rhs.workspace.last_a_range() {
                let value = 1.0 + if kappa >= 0.0 { kappa * lo } else { kappa * hi };
                min_hyp = Some(min_hyp.map_or(value, |m| m.min(value)));
            }
        }
    });
    let (final_state, blow_up) = match outcome {
        Ok(st) => (st, None),
        Err(failed) => {
            let (st, err) = *failed;
            let step = match &err {
                HarnessError::BlowUp { step, .. } => *step,
                _ => 0,
            };
            (
                st,
                Some(BlowUpInfo {
                    step,
                    reason: err.to_string(),
                }),
            )
        }
    };
    if monitor && min_hyp.is_none() {
        min_hyp = Some(1.0);
    }
    Ok(RunRecord {
        config: cfg.clone(),
        final_state,
        samples,
        wall_time_s: started.elapsed().as_secs_f64(),
        blow_up,
        min_hyperbolicity: min_hyp,
    })
}

/// Runs one trajectory, turning a blow-up into an error.
pub fn run_trajectory(cfg: &RunConfig) -> Result<RunRecord, HarnessError> {
    let record = run_trajectory_record(cfg)?;
    match &record.blow_up {
        None => Ok(record),
        Some(info) => Err(HarnessError::BlowUp {
            method: cfg.method,
            step: info.step,
            time: record.final_state.time,
            source: IntegratorError::BlowUp {
                step: info.step,
                norm: pair_norm(&record.final_state, 0.0),
            },
        }),
    }
}

/// How the self-convergence reference is computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpec {
    pub method: MethodName,
    /// `h_ref = min(study h) / refinement`.
    pub refinement: usize,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            method: MethodName::TI3,
            refinement: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct ReferenceKey {
    problem: String,
    method: MethodName,
    degree: usize,
    final_time: u64,
    h_ref: u64,
}

/// Shared cache of reference solutions.
#[derive(Debug, Default)]
pub struct ReferenceCache {
    entries: Mutex<HashMap<ReferenceKey, PairState>>,
}

impl ReferenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("reference cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reference solution at time `T` computed with `method` and step `h_ref`.
pub fn reference_solution(
    problem: &ProblemSpec,
    degree: usize,
    final_time: f64,
    h_ref: f64,
    method: MethodName,
    cache: &ReferenceCache,
) -> Result<PairState, HarnessError> {
    let key = ReferenceKey {
        problem: serde_json::to_string(problem).expect("problem serializes"),
        method,
        degree,
        final_time: final_time.to_bits(),
        h_ref: h_ref.to_bits(),
    };
    if let Some(st) = cache.entries.lock().expect("reference cache poisoned").get(&key) {
        return Ok(st.clone());
    }
    let mut cfg = RunConfig::new(method, degree, h_ref, final_time, problem.clone());
    cfg.record_every = usize::MAX;
    let st = run_trajectory(&cfg)?.final_state;
    cache
        .entries
        .lock()
        .expect("reference cache poisoned")
        .entry(key)
        .or_insert_with(|| st.clone());
    Ok(st)
}

/// `|||st - ref|||₁`, the `H² × H¹` error.
pub fn error_vs_reference(st: &PairState, reference: &PairState) -> Result<f64, HarnessError> {
    Ok(pair_norm(&st.try_sub(reference)?, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: f64,
    /// RMS deviation of `ln(error)` from the fitted line.
    pub residual: f64,
}

/// Least-squares slope of `ln(error)` against `ln(h)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit, HarnessError> {
    if points.len() < 3 {
        return Err(HarnessError::Config(format!(
            "order fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(h, e)) = points.iter().find(|&&(h, e)| !e.is_finite() || e <= 0.0 || h.is_nan() || h <= 0.0) {
        return Err(HarnessError::Config(format!(
            "order fit needs positive finite data, got h = {h}, error = {e}"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(HarnessError::Config("order fit needs distinct step sizes".into()));
    }
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + order * x)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(OrderFit { order, residual })
}

/// Points excluded from each end of the h-grid before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    pub skip_coarse: usize,
    pub skip_fine: usize,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            skip_coarse: 2,
            skip_fine: 2,
        }
    }
}

impl FitWindow {
    pub const ALL: FitWindow = FitWindow {
        skip_coarse: 0,
        skip_fine: 0,
    };

    /// Selects the window from `(h, error)` points sorted by decreasing `h`.
    /// Falls back to every point when the window would leave fewer than three.
    pub fn select(&self, sorted: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let n = sorted.len();
        if n >= self.skip_coarse + self.skip_fine + 3 {
            sorted[self.skip_coarse..n - self.skip_fine].to_vec()
        } else {
            sorted.to_vec()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentityReport {
    pub steps: usize,
    pub max_relative_residual: f64,
    /// `|||Δ_n|||₁` for `n = 0..=steps`.
    pub difference_norms: Vec<f64>,
}

/// Seeded random Hermitian pair with unit `|||·|||₁` norm and decaying modes.
pub fn random_pair(degree: usize, seed: u64) -> PairState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |j: i64| {
        let decay = 1.0 / (1.0 + (j * j) as f64).powi(2);
        Complex::new(rng.gen_range(-1.0..1.0), if j == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) }) * decay
    };
    let u = SpectralField::from_fn(degree, &mut draw, true);
    let udot = SpectralField::from_fn(degree, &mut draw, true);
    let st = PairState { u, udot, time: 0.0 };
    let norm = pair_norm(&st, 1.0);
    PairState {
        u: st.u.scale(1.0 / norm),
        udot: st.udot.scale(1.0 / norm),
        time: 0.0,
    }
}

/// Advances the initial data and an `ε`-perturbed copy side by side and
/// checks `|||Δ_{n+1}|||₁² = |||Δ_n|||₁² + κR` at every step.
///
/// The residual of each step is taken relative to
/// `max(|||Δ_n|||₁², |||Δ_{n+1}|||₁²)`; with `ε = 0` both sides vanish and
/// the residual is zero.
pub fn energy_identity_experiment(cfg: &RunConfig, epsilon: f64, seed: u64) -> Result<EnergyIdentityReport, HarnessError> {
    let n_steps = cfg.validate()?;
    let method = builtin_method(cfg.method);
    if !method.symmetric || method.form != UpdateForm::OneStage {
        return Err(IntegratorError::NotSymmetric(cfg.method).into());
    }
    let integrator = Integrator::new(method, cfg.h, cfg.kappa(), cfg.degree)?;
    let mut u = discretize_initial_data(&cfg.problem, cfg.degree);
    let perturbation = random_pair(cfg.degree, seed);
    let mut v = PairState {
        u: u.u.try_add(&perturbation.u.scale(epsilon))?,
        udot: u.udot.try_add(&perturbation.udot.scale(epsilon))?,
        time: 0.0,
    };
    let mut rhs_u = DiscreteNonlinearity::new(&cfg.problem, cfg.degree);
    let mut rhs_v = DiscreteNonlinearity::new(&cfg.problem, cfg.degree);
    let mut norms = vec![pair_norm(&u.try_sub(&v)?, 1.0)];
    let mut worst: f64 = 0.0;
    for n in 1..=n_steps {
        let blow = |source| HarnessError::BlowUp {
            method: cfg.method,
            step: n,
            time: u.time,
            source,
        };
        let su = integrator.step_detailed(&u, &mut rhs_u).map_err(blow)?;
        let sv = integrator.step_detailed(&v, &mut rhs_v).map_err(blow)?;
        check_blow_up(&su.state, n).map_err(blow)?;
        check_blow_up(&sv.state, n).map_err(blow)?;
        let remainder = energy_remainder(&integrator, &u, &su, &v, &sv)?;
        let before = pair_norm(&u.try_sub(&v)?, 1.0).powi(2);
        let after = pair_norm(&su.state.try_sub(&sv.state)?, 1.0).powi(2);
        let scale = before.max(after);
        if scale > 0.0 {
            worst = worst.max(((after - before) - cfg.kappa() * remainder).abs() / scale);
        }
        norms.push(after.sqrt());
        u = su.state;
        v = sv.state;
    }
    Ok(EnergyIdentityReport {
        steps: n_steps,
        max_relative_residual: worst,
        difference_norms: norms,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub methods: Vec<MethodName>,
    pub h_values: Vec<f64>,
    pub degrees: Vec<usize>,
    pub problem: ProblemSpec,
    pub final_time: f64,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub window: FitWindow,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config("method list is empty".into()));
        }
        if self.h_values.is_empty() {
            return Err(HarnessError::Config("step size list is empty".into()));
        }
        if self.degrees.is_empty() {
            return Err(HarnessError::Config("degree list is empty".into()));
        }
        if self.degrees.contains(&0) {
            return Err(SpectralError::ZeroDegree.into());
        }
        if self.reference.refinement == 0 {
            return Err(HarnessError::Config("reference refinement must be at least 1".into()));
        }
        for &h in &self.h_values {
            step_count(h, self.final_time)?;
        }
        step_count(self.reference_step(), self.final_time)?;
        self.problem.validate()?;
        Ok(())
    }

    pub fn reference_step(&self) -> f64 {
        let h_min = self.h_values.iter().copied().fold(f64::INFINITY, f64::min);
        h_min / self.reference.refinement as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub method: MethodName,
    pub degree: usize,
    pub h: f64,
    /// `+∞` for cells that blew up.
    pub error: f64,
    pub runtime_s: f64,
    pub blow_up: Option<BlowUpInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFit {
    pub method: MethodName,
    pub degree: usize,
    pub fit: Option<OrderFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference: String,
    pub entries: Vec<ErrorEntry>,
    pub fits: Vec<GroupFit>,
}

impl ConvergenceReport {
    pub fn fit_for(&self, method: MethodName, degree: usize) -> Option<OrderFit> {
        self.fits
            .iter()
            .find(|f| f.method == method && f.degree == degree)
            .and_then(|f| f.fit)
    }

    /// `(h, error)` points of one group, sorted by decreasing `h`.
    pub fn points(&self, method: MethodName, degree: usize) -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = self
            .entries
            .iter()
            .filter(|e| e.method == method && e.degree == degree)
            .map(|e| (e.h, e.error))
            .collect();
        pts.sort_by(|a, b| b.0.total_cmp(&a.0));
        pts
    }

    pub fn all_failed(&self) -> bool {
        !self.entries.is_empty() && self.entries.iter().all(|e| e.blow_up.is_some())
    }
}

/// Fits the order of each `(method, degree)` group over `window`, ignoring
/// cells that blew up.
pub fn fit_groups(entries: &[ErrorEntry], window: FitWindow) -> Vec<GroupFit> {
    let mut groups: Vec<(MethodName, usize)> = Vec::new();
    for e in entries {
        if !groups.contains(&(e.method, e.degree)) {
            groups.push((e.method, e.degree));
        }
    }
    groups
        .into_iter()
        .map(|(method, degree)| {
            let mut pts: Vec<(f64, f64)> = entries
                .iter()
                .filter(|e| e.method == method && e.degree == degree && e.error.is_finite() && e.error > 0.0)
                .map(|e| (e.h, e.error))
                .collect();
            pts.sort_by(|a, b| b.0.total_cmp(&a.0));
            GroupFit {
                method,
                degree,
                fit: fit_order(&window.select(&pts)).ok(),
            }
        })
        .collect()
}

/// Full cross product of methods, step sizes and degrees against per-degree
/// references. Cells run in parallel on the current rayon pool; a blow-up
/// is recorded in its cell and does not stop the study.
pub fn convergence_study(study: &StudyConfig, cache: &ReferenceCache) -> Result<ConvergenceReport, HarnessError> {
    study.validate()?;
    let h_ref = study.reference_step();
    let references: Vec<(usize, PairState)> = study
        .degrees
        .par_iter()
        .map(|&k| {
            reference_solution(&study.problem, k, study.final_time, h_ref, study.reference.method, cache).map(|r| (k, r))
        })
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for &method in &study.methods {
        for &degree in &study.degrees {
            for &h in &study.h_values {
                cells.push((method, degree, h));
            }
        }
    }
    let entries: Vec<ErrorEntry> = cells
        .par_iter()
        .map(|&(method, degree, h)| {
            let reference = &references.iter().find(|(k, _)| *k == degree).expect("reference per degree").1;
            let cfg = RunConfig::new(method, degree, h, study.final_time, study.problem.clone());
            let record = run_trajectory_record(&cfg)?;
            let error = match record.blow_up {
                Some(_) => f64::INFINITY,
                None => error_vs_reference(&record.final_state, reference)?,
            };
            Ok(ErrorEntry {
                method,
                degree,
                h,
                error,
                runtime_s: record.wall_time_s,
                blow_up: record.blow_up,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(ConvergenceReport {
        reference: format!("{} at h = {:e}, same K", study.reference.method, h_ref),
        fits: fit_groups(&entries, study.window),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialReport {
    pub method: MethodName,
    pub h: f64,
    pub reference_degree: usize,
    /// `(K, error)` with the degree-`K` solution zero-padded to the reference degree.
    pub entries: Vec<(usize, f64)>,
    pub fit: Option<OrderFit>,
}

/// Self-convergence in `K` at fixed `h`.
pub fn spatial_study(
    method: MethodName,
    h: f64,
    degrees: &[usize],
    reference_degree: usize,
    problem: &ProblemSpec,
    final_time: f64,
) -> Result<SpatialReport, HarnessError> {
    let run = |k: usize| -> Result<PairState, HarnessError> {
        Ok(run_trajectory(&RunConfig::new(method, k, h, final_time, problem.clone()))?.final_state)
    };
    let reference = run(reference_degree)?;
    let entries: Vec<(usize, f64)> = degrees
        .par_iter()
        .map(|&k| {
            let st = run(k)?.project(reference_degree);
            Ok((k, error_vs_reference(&st, &reference)?))
        })
        .collect::<Result<_, HarnessError>>()?;
    let pts: Vec<(f64, f64)> = entries.iter().map(|&(k, e)| (1.0 / k as f64, e)).collect();
    Ok(SpatialReport {
        method,
        h,
        reference_degree,
        fit: fit_order(&pts).ok(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::linear_flow;
    use crate::problem::{builtin_problem, GAUCKLER_TEST, LINEAR};

    fn rel(a: &PairState, b: &PairState) -> f64 {
        pair_norm(&a.try_sub(b).unwrap(), 1.0) / pair_norm(b, 1.0)
    }

    #[test]
    fn step_count_must_divide() {
        assert_eq!(step_count(0.25, 1.0).unwrap(), 4);
        assert_eq!(step_count(0.1, 1.0).unwrap(), 10);
        assert!(step_count(0.3, 1.0).is_err());
        assert!(step_count(-0.1, 1.0).is_err());
        assert!(step_count(0.1, 0.0).is_err());
    }

    #[test]
    fn linear_problem_matches_exact_flow() {
        let p = builtin_problem(LINEAR, 0.3).unwrap();
        for method in MethodName::ALL {
            let rec = run_trajectory(&RunConfig::new(method, 12, 0.1, 1.0, p.clone())).unwrap();
            let exact = linear_flow(&discretize_initial_data(&p, 12), 1.0);
            assert!(rel(&rec.final_state, &exact) < 1e-12, "{method}");
        }
    }

    #[test]
    fn record_every_controls_samples() {
        let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
        let mut cfg = RunConfig::new(MethodName::TI1, 8, 0.125, 1.0, p);
        cfg.record_every = 8;
        let rec = run_trajectory(&cfg).unwrap();
        assert_eq!(rec.samples.len(), 2);
        assert_eq!(rec.samples[0].step, 0);
        assert_eq!(rec.samples[1].step, 8);
        cfg.record_every = 3;
        let rec = run_trajectory(&cfg).unwrap();
        let steps: Vec<usize> = rec.samples.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 3, 6, 8]);
        assert_eq!(rec.final_state.degree(), 8);
    }

    #[test]
    fn runs_are_deterministic() {
        let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
        let cfg = RunConfig::new(MethodName::TI2, 16, 1.0 / 16.0, 0.5, p);
        let a = run_trajectory(&cfg).unwrap();
        let b = run_trajectory(&cfg).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn hyperbolicity_monitor() {
        let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
        let mut cfg = RunConfig::new(MethodName::TI1, 8, 0.25, 1.0, p);
        cfg.diagnostics.hyperbolicity = true;
        let rec = run_trajectory(&cfg).unwrap();
        let m = rec.min_hyperbolicity.unwrap();
        assert!(m > 0.9 && m < 1.0, "{m}");
    }

    #[test]
    fn error_vs_reference_examples() {
        let k = 3;
        let st = random_pair(k, 5);
        assert_eq!(error_vs_reference(&st, &st).unwrap(), 0.0);
        let eps = 1e-3;
        let mut d = PairState::zeros(k);
        d.udot.set(0, Complex::new(eps, 0.0));
        assert!((error_vs_reference(&d, &PairState::zeros(k)).unwrap() - eps).abs() < 1e-18);
        let mut d = PairState::zeros(k);
        d.u.set(1, Complex::new(eps, 0.0));
        assert!((error_vs_reference(&d, &PairState::zeros(k)).unwrap() - 2.0 * eps).abs() < 1e-18);
        assert!(error_vs_reference(&PairState::zeros(2), &PairState::zeros(3)).is_err());
    }

    #[test]
    fn fit_order_examples() {
        let hs = [0.5f64, 0.25, 0.125, 0.0625];
        for p in [2.0, 3.0, 0.0] {
            let pts: Vec<(f64, f64)> = hs.iter().map(|&h| (h, 7.0 * h.powf(p))).collect();
            let fit = fit_order(&pts).unwrap();
            assert!((fit.order - p).abs() < 1e-10, "{p}: {fit:?}");
            assert!(fit.residual < 1e-10);
        }
        assert!(fit_order(&[(0.1, 1.0), (0.2, 2.0)]).is_err());
        assert!(fit_order(&[(0.1, 1.0), (0.2, 0.0), (0.3, 1.0)]).is_err());
    }

    #[test]
    fn fit_window_selection() {
        let pts: Vec<(f64, f64)> = (0..7).map(|i| (1.0 / (1 << i) as f64, 1.0)).collect();
        assert_eq!(FitWindow::default().select(&pts).len(), 3);
        assert_eq!(FitWindow::default().select(&pts[..5]).len(), 5);
        assert_eq!(FitWindow::ALL.select(&pts).len(), 7);
    }

    #[test]
    fn energy_identity_kappa_zero_is_isometry() {
        let p = builtin_problem(GAUCKLER_TEST, 0.0).unwrap();
        let cfg = RunConfig::new(MethodName::TI3, 10, 1.0 / 8.0, 1.0, p);
        let rep = energy_identity_experiment(&cfg, 1e-3, 1).unwrap();
        let first = rep.difference_norms[0];
        for n in &rep.difference_norms {
            assert!((n - first).abs() <= 1e-12 * first);
        }
    }

    #[test]
    fn energy_identity_zero_perturbation() {
        let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
        let cfg = RunConfig::new(MethodName::TI1, 8, 1.0 / 8.0, 1.0, p);
        let rep = energy_identity_experiment(&cfg, 0.0, 1).unwrap();
        assert_eq!(rep.max_relative_residual, 0.0);
        assert!(rep.difference_norms.iter().all(|&n| n == 0.0));
    }

    #[test]
    fn energy_identity_rejects_nti() {
        let p = builtin_problem(GAUCKLER_TEST, 0.01).unwrap();
        let cfg = RunConfig::new(MethodName::NTI, 8, 1.0 / 8.0, 1.0, p);
        assert!(energy_identity_experiment(&cfg, 1e-3, 1).is_err());
    }

    #[test]
    fn reference_cache_reuses_entries() {
        let p = builtin_problem(LINEAR, 0.01).unwrap();
        let cache = ReferenceCache::new();
        let a = reference_solution(&p, 6, 1.0, 1.0 / 64.0, MethodName::TI3, &cache).unwrap();
        let b = reference_solution(&p, 6, 1.0, 1.0 / 64.0, MethodName::TI3, &cache).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
        let exact = linear_flow(&discretize_initial_data(&p, 6), 1.0);
        assert!(rel(&a, &exact) < 1e-12);
    }

    #[test]
    fn linear_study_degenerates() {
        let study = StudyConfig {
            methods: vec![MethodName::TI1, MethodName::NTI],
            h_values: vec![0.5, 0.25, 0.125],
            degrees: vec![8],
            problem: builtin_problem(LINEAR, 0.01).unwrap(),
            final_time: 1.0,
            reference: ReferenceSpec::default(),
            window: FitWindow::default(),
        };
        let rep = convergence_study(&study, &ReferenceCache::new()).unwrap();
        assert_eq!(rep.entries.len(), 6);
        assert!(rep.entries.iter().all(|e| e.error <= 1e-12), "{:?}", rep.entries);
    }

    #[test]
    fn study_validation() {
        let mut study = StudyConfig {
            methods: vec![],
            h_values: vec![0.5],
            degrees: vec![8],
            problem: builtin_problem(LINEAR, 0.01).unwrap(),
            final_time: 1.0,
            reference: ReferenceSpec::default(),
            window: FitWindow::default(),
        };
        assert!(study.validate().is_err());
        study.methods = vec![MethodName::TI1];
        assert!(study.validate().is_ok());
        study.h_values = vec![0.3];
        assert!(study.validate().is_err());
    }

    #[test]
    fn unstable_regime_reports_blow_up() {
        let p = builtin_problem(GAUCKLER_TEST, 10.0).unwrap();
        let cfg = RunConfig::new(MethodName::TI1, 32, 0.5, 20.0, p);
        let rec = run_trajectory_record(&cfg).unwrap();
        assert!(rec.blow_up.is_some());
        assert!(rec.final_state.is_finite());
        assert!(matches!(run_trajectory(&cfg), Err(HarnessError::BlowUp { .. })));
    }
}
