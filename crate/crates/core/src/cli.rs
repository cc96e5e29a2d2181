//! Command-line front end.
//!
//! Configuration is a TOML file with a `[problem]` section and either a
//! `[run]` section (for `solve`) or a `[study]` section (for `converge`).
//! Step sizes may be given as exponents `j`, meaning `h = 2^-j`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{
    convergence_study, run_trajectory_record, ConvergenceReport, Diagnostics, FitWindow, HarnessError, ReferenceCache,
    ReferenceSpec, RunConfig, RunRecord, StudyConfig,
};
use crate::integrators::{
    builtin_method, check_assumption1, identity_residuals, uniform_samples, AssumptionReport, IdentityResiduals,
    MethodName, BOUND_LABELS, DEFAULT_BOUND_CONSTANT,
};
use crate::problem::{builtin_problem, BivariatePolynomial, CoefficientGenerator, Polynomial, ProblemSpec, CUSTOM_POLYNOMIAL};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

pub const CSV_HEADER: [&str; 7] = ["method", "K", "h", "error_h2h1", "order_fit", "order_residual", "runtime_s"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Harness(HarnessError),
}

impl CliError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Harness(HarnessError::BlowUp { .. }) => EXIT_NUMERICAL,
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qlwave", version, about = "Trigonometric integrators for 1D periodic quasilinear wave equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for studies (default: number of cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Suppress progress output and warnings.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trajectory and write the final state.
    Solve(IoArgs),
    /// Run a convergence study and write one row per (method, K, h).
    Converge(IoArgs),
    /// Check the filter bounds and identities of TI1, TI2 and TI3.
    VerifyCoefficients(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, clap::Args)]
pub struct IoArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1e4)]
    pub xi_max: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = DEFAULT_BOUND_CONSTANT)]
    pub bound: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

// Raw file schema. Names stay strings here so that resolution errors can
// point at the offending field.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub seed: Option<u64>,
    pub problem: Option<RawProblem>,
    pub run: Option<RawRun>,
    pub study: Option<RawStudy>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProblem {
    pub name: String,
    pub kappa: f64,
    pub a: Option<Polynomial>,
    pub g: Option<BivariatePolynomial>,
    pub initial_u: Option<CoefficientGenerator>,
    pub initial_udot: Option<CoefficientGenerator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub method: String,
    pub degree: usize,
    pub h: Option<f64>,
    pub h_exponent: Option<i32>,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    pub record_every: Option<usize>,
    #[serde(default)]
    pub hyperbolicity: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawStudy {
    pub methods: Vec<String>,
    pub h_exponents: Vec<i32>,
    pub degrees: Vec<usize>,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_reference_method")]
    pub reference_method: String,
    #[serde(default = "default_refinement")]
    pub reference_refinement: usize,
    #[serde(default = "default_skip")]
    pub fit_skip_coarse: usize,
    #[serde(default = "default_skip")]
    pub fit_skip_fine: usize,
}

fn default_final_time() -> f64 {
    1.0
}

fn default_reference_method() -> String {
    "TI3".into()
}

fn default_refinement() -> usize {
    16
}

fn default_skip() -> usize {
    2
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub seed: u64,
    pub problem: ProblemSpec,
    pub run: Option<RunConfig>,
    pub study: Option<StudyConfig>,
}

fn resolve_method(field: &str, name: &str) -> Result<MethodName, CliError> {
    name.parse()
        .map_err(|_| CliError::field(field, format!("unknown method `{name}` (expected one of TI1, TI2, TI3, NTI)")))
}

fn resolve_problem(raw: &RawProblem) -> Result<ProblemSpec, CliError> {
    if !raw.kappa.is_finite() {
        return Err(CliError::field("problem.kappa", "must be finite"));
    }
    let mut p = if raw.name == CUSTOM_POLYNOMIAL {
        let a = raw
            .a
            .clone()
            .ok_or_else(|| CliError::field("problem.a", "required for custom-polynomial"))?;
        let g = raw
            .g
            .clone()
            .ok_or_else(|| CliError::field("problem.g", "required for custom-polynomial"))?;
        ProblemSpec::custom_polynomial(raw.kappa, a, g, None).map_err(|e| CliError::field("problem", e.to_string()))?
    } else {
        if raw.a.is_some() || raw.g.is_some() {
            return Err(CliError::field(
                "problem.a",
                format!("coefficients are only accepted for `{CUSTOM_POLYNOMIAL}`"),
            ));
        }
        builtin_problem(&raw.name, raw.kappa).map_err(|e| CliError::field("problem.name", e.to_string()))?
    };
    if let Some(g) = &raw.initial_u {
        p.initial_u = g.clone();
    }
    if let Some(g) = &raw.initial_udot {
        p.initial_udot = g.clone();
    }
    p.validate().map_err(|e| CliError::field("problem", e.to_string()))?;
    Ok(p)
}

fn exponent_to_h(field: &str, j: i32) -> Result<f64, CliError> {
    if !(0..=30).contains(&j) {
        return Err(CliError::field(field, format!("exponent {j} outside 0..=30")));
    }
    Ok(2f64.powi(-j))
}

fn resolve_run(raw: &RawRun, problem: &ProblemSpec) -> Result<RunConfig, CliError> {
    let method = resolve_method("run.method", &raw.method)?;
    let h = match (raw.h, raw.h_exponent) {
        (Some(_), Some(_)) => return Err(CliError::field("run.h", "give either h or h_exponent, not both")),
        (Some(h), None) => h,
        (None, Some(j)) => exponent_to_h("run.h_exponent", j)?,
        (None, None) => return Err(CliError::field("run.h", "missing step size (h or h_exponent)")),
    };
    if raw.degree == 0 {
        return Err(CliError::field("run.degree", "must be at least 1"));
    }
    let mut cfg = RunConfig::new(method, raw.degree, h, raw.final_time, problem.clone());
    cfg.diagnostics = Diagnostics {
        hyperbolicity: raw.hyperbolicity,
    };
    let n = cfg.n_steps().map_err(|e| CliError::field("run.h", e.to_string()))?;
    cfg.record_every = match raw.record_every {
        Some(0) => return Err(CliError::field("run.record_every", "must be at least 1")),
        Some(r) => r,
        None => n,
    };
    Ok(cfg)
}

fn resolve_study(raw: &RawStudy, problem: &ProblemSpec) -> Result<StudyConfig, CliError> {
    if raw.methods.is_empty() {
        return Err(CliError::field("study.methods", "method list is empty"));
    }
    let methods = raw
        .methods
        .iter()
        .enumerate()
        .map(|(i, m)| resolve_method(&format!("study.methods[{i}]"), m))
        .collect::<Result<Vec<_>, _>>()?;
    if raw.h_exponents.is_empty() {
        return Err(CliError::field("study.h_exponents", "step size list is empty"));
    }
    let h_values = raw
        .h_exponents
        .iter()
        .enumerate()
        .map(|(i, &j)| exponent_to_h(&format!("study.h_exponents[{i}]"), j))
        .collect::<Result<Vec<_>, _>>()?;
    if raw.degrees.is_empty() {
        return Err(CliError::field("study.degrees", "degree list is empty"));
    }
    if let Some(i) = raw.degrees.iter().position(|&k| k == 0) {
        return Err(CliError::field(format!("study.degrees[{i}]"), "must be at least 1"));
    }
    let reference = ReferenceSpec {
        method: resolve_method("study.reference_method", &raw.reference_method)?,
        refinement: raw.reference_refinement,
    };
    let study = StudyConfig {
        methods,
        h_values,
        degrees: raw.degrees.clone(),
        problem: problem.clone(),
        final_time: raw.final_time,
        reference,
        window: FitWindow {
            skip_coarse: raw.fit_skip_coarse,
            skip_fine: raw.fit_skip_fine,
        },
    };
    study.validate().map_err(|e| CliError::field("study", e.to_string()))?;
    Ok(study)
}

/// Parses and resolves a TOML config. Every name is checked here, before
/// any numerical work.
pub fn parse_config(text: &str) -> Result<CliConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let problem = resolve_problem(raw.problem.as_ref().ok_or_else(|| CliError::field("problem", "missing section"))?)?;
    let run = raw.run.as_ref().map(|r| resolve_run(r, &problem)).transpose()?;
    let study = raw.study.as_ref().map(|s| resolve_study(s, &problem)).transpose()?;
    Ok(CliConfig {
        seed: raw.seed.unwrap_or(0),
        problem,
        run,
        study,
    })
}

pub fn load_config(path: &Path) -> Result<CliConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// One line of the convergence CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub method: MethodName,
    #[serde(rename = "K")]
    pub degree: usize,
    pub h: f64,
    pub error_h2h1: f64,
    pub order_fit: f64,
    pub order_residual: f64,
    pub runtime_s: f64,
}

pub fn rows_from_report(report: &ConvergenceReport) -> Vec<ConvergenceRow> {
    report
        .entries
        .iter()
        .map(|e| {
            let fit = report.fit_for(e.method, e.degree);
            ConvergenceRow {
                method: e.method,
                degree: e.degree,
                h: e.h,
                error_h2h1: e.error,
                order_fit: fit.map_or(f64::NAN, |f| f.order),
                order_residual: fit.map_or(f64::NAN, |f| f.residual),
                runtime_s: e.runtime_s,
            }
        })
        .collect()
}

/// 17 significant digits; `inf` and `nan` spelled out.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.degree.to_string(),
            format_float(r.h),
            format_float(r.error_h2h1),
            format_float(r.order_fit),
            format_float(r.order_residual),
            format_float(r.runtime_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_convergence_csv(text: &str) -> Result<Vec<ConvergenceRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| CliError::Parse(e.to_string()))?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(CliError::Parse(format!("unexpected header {header:?}")));
    }
    let num = |s: &str| -> Result<f64, CliError> { s.parse().map_err(|_| CliError::Parse(format!("bad number `{s}`"))) };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Parse(e.to_string()))?;
        rows.push(ConvergenceRow {
            method: rec[0].parse().map_err(|_| CliError::Parse(format!("bad method `{}`", &rec[0])))?,
            degree: rec[1].parse().map_err(|_| CliError::Parse(format!("bad degree `{}`", &rec[1])))?,
            h: num(&rec[2])?,
            error_h2h1: num(&rec[3])?,
            order_fit: num(&rec[4])?,
            order_residual: num(&rec[5])?,
            runtime_s: num(&rec[6])?,
        });
    }
    Ok(rows)
}

/// Bit-level row equality, treating NaN fields as equal.
pub fn rows_identical(a: &[ConvergenceRow], b: &[ConvergenceRow]) -> bool {
    let same = |x: f64, y: f64| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan());
    a.len() == b.len()
        && a.iter().zip(b).all(|(r, s)| {
            r.method == s.method
                && r.degree == s.degree
                && same(r.h, s.h)
                && same(r.error_h2h1, s.error_h2h1)
                && same(r.order_fit, s.order_fit)
                && same(r.order_residual, s.order_residual)
                && same(r.runtime_s, s.runtime_s)
        })
}

fn solve_csv(record: &RunRecord) -> String {
    let mut s = String::from("j,u_re,u_im,udot_re,udot_im\n");
    let st = &record.final_state;
    for (j, c) in st.u.modes() {
        let d = st.udot.coeff(j);
        let _ = writeln!(
            s,
            "{j},{},{},{},{}",
            format_float(c.re),
            format_float(c.im),
            format_float(d.re),
            format_float(d.im)
        );
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub xi_max: f64,
    pub bound: f64,
    pub methods: Vec<AssumptionReport>,
    pub residuals: Vec<(MethodName, IdentityResiduals)>,
    pub passed: bool,
}

/// Runs the filter checks. TI1 and TI3 must satisfy all six bounds, TI2 the
/// first five with its sixth supremum above `10³`, and every identity
/// residual must be at most `10⁻¹²`.
pub fn verify_coefficients(xi_max: f64, samples: usize, bound: f64) -> Result<VerificationReport, CliError> {
    let methods = [MethodName::TI1, MethodName::TI2, MethodName::TI3];
    let reports = methods
        .iter()
        .map(|&m| check_assumption1(&builtin_method(m), xi_max, samples))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::field("xi_max", e.to_string()))?;
    let xis = uniform_samples(xi_max.min(1e3), 10_000);
    let residuals: Vec<(MethodName, IdentityResiduals)> =
        methods.iter().map(|&m| (m, identity_residuals(&builtin_method(m), &xis))).collect();
    let mut passed = residuals.iter().all(|(_, r)| r.max() <= 1e-12);
    for rep in &reports {
        let ok = rep.passes(bound);
        passed &= match rep.method {
            MethodName::TI2 => ok[..5].iter().all(|&b| b) && rep.bounds[5].supremum > 1e3,
            _ => ok.iter().all(|&b| b),
        };
    }
    Ok(VerificationReport {
        xi_max,
        bound,
        methods: reports,
        residuals,
        passed,
    })
}

pub fn format_verification(rep: &VerificationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "filter bounds over xi in (0, {:e}], constant c = {}", rep.xi_max, rep.bound);
    let _ = writeln!(s, "{:<6}{:<32}{:>24}{:>24}  ok", "method", "bound", "supremum", "argmax");
    for r in &rep.methods {
        let ok = r.passes(rep.bound);
        for (i, b) in r.bounds.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<6}{:<32}{:>24.16e}{:>24.16e}  {}",
                r.method.as_str(),
                BOUND_LABELS[i],
                b.supremum,
                b.argmax,
                if ok[i] { "yes" } else { "no" }
            );
        }
    }
    let _ = writeln!(s, "identity residuals");
    let _ = writeln!(s, "{:<6}{:>14}{:>14}{:>14}{:>14}", "method", "symmetry", "theta", "ups*cos", "ups*sinc");
    for (m, r) in &rep.residuals {
        let _ = writeln!(
            s,
            "{:<6}{:>14.3e}{:>14.3e}{:>14.3e}{:>14.3e}",
            m.as_str(),
            r.symmetry,
            r.theta,
            r.upsilon_b1,
            r.upsilon_bbar1
        );
    }
    let _ = writeln!(s, "result: {}", if rep.passed { "PASS" } else { "FAIL" });
    s
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Write {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn cmd_solve(args: &IoArgs, quiet: bool) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let run = cfg
        .run
        .ok_or_else(|| CliError::field("run", "missing section"))?;
    let record = run_trajectory_record(&run).map_err(CliError::Harness)?;
    let text = match args.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&record),
        Format::Csv => solve_csv(&record),
    };
    emit(args.out.as_deref(), &text)?;
    if let Some(info) = &record.blow_up {
        return Err(CliError::Numerical(format!("blow-up at step {}: {}", info.step, info.reason)));
    }
    if !quiet {
        eprintln!(
            "{} K={} h={} T={}: {} steps in {:.3}s",
            run.method,
            run.degree,
            run.h,
            run.final_time,
            record.samples.last().map_or(0, |s| s.step),
            record.wall_time_s
        );
    }
    Ok(())
}

fn cmd_converge(args: &IoArgs, jobs: Option<usize>, quiet: bool) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let study = cfg
        .study
        .ok_or_else(|| CliError::field("study", "missing section"))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::field("--jobs", "must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::field("--jobs", e.to_string()))?;
    let cache = ReferenceCache::new();
    let report = pool
        .install(|| convergence_study(&study, &cache))
        .map_err(CliError::Harness)?;
    let rows = rows_from_report(&report);
    let text = match args.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut buf = Vec::new();
            write_convergence_csv(&rows, &mut buf).map_err(|e| CliError::Write {
                path: PathBuf::from("<buffer>"),
                source: io::Error::other(e),
            })?;
            String::from_utf8(buf).expect("CSV is UTF-8")
        }
    };
    emit(args.out.as_deref(), &text)?;
    if !quiet {
        eprintln!("reference: {}", report.reference);
        for f in &report.fits {
            match f.fit {
                Some(fit) => eprintln!("{} K={}: order {:.4} (residual {:.3e})", f.method, f.degree, fit.order, fit.residual),
                None => eprintln!("{} K={}: no order fit", f.method, f.degree),
            }
        }
    }
    if report.all_failed() {
        return Err(CliError::Numerical("every cell of the study blew up".into()));
    }
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), CliError> {
    let rep = verify_coefficients(args.xi_max, args.samples, args.bound)?;
    let text = match args.format.unwrap_or(Format::Csv) {
        Format::Json => to_json(&rep),
        Format::Csv => format_verification(&rep),
    };
    emit(args.out.as_deref(), &text)?;
    if rep.passed {
        Ok(())
    } else {
        Err(CliError::Numerical("coefficient verification failed".into()))
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, cli.quiet),
        Command::Converge(a) => cmd_converge(a, cli.jobs, cli.quiet),
        Command::VerifyCoefficients(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
