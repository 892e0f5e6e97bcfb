//! Command-line front end for lazy ensembles.
//!
//! Matrices are read from JSON documents `{"dim": n, "data": [[re, im], ...]}`
//! in row-major order. Results are written to stdout as JSON with every number
//! rounded to 12 significant digits; curves are CSV. Exit status is 0 on
//! success, 1 on a domain error and 2 on a usage or parse error.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use lazy_ensemble::conditional::{self, ConditionalEnsemble, Observable};
use lazy_ensemble::inverse::{self, Gauge, LazyEnsemble};
use lazy_ensemble::partition::{self, qubit, TemperatureSpectrum};
use lazy_ensemble::sampler::{self, RandomStream};
use lazy_ensemble::spectra::{self, ComplexMatrix, DensityMatrix, HermitianMatrix};
use lazy_ensemble::Error as DomainError;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const SIGNIFICANT_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(#[from] DomainError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io { .. } => 1,
            CliError::Parse(_) | CliError::Usage(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Parse(_) => "ParseError",
            CliError::Usage(_) => "UsageError",
            CliError::Io { .. } => "IoError",
            CliError::Domain(e) => match e {
                DomainError::NotHermitian { .. } => "NotHermitian",
                DomainError::TraceNotOne { .. } => "TraceNotOne",
                DomainError::NotPositive { .. } => "NotPositive",
                DomainError::NotFullRange { .. } => "NotFullRange",
                DomainError::NoConvergence { .. } => "NoConvergence",
                DomainError::OutOfRange { .. } => "OutOfRange",
                DomainError::SpreadTooLarge { .. } => "SpreadTooLarge",
                DomainError::TargetUnattainable { .. } => "TargetUnattainable",
                DomainError::ScalarObservable => "ScalarObservable",
                DomainError::TooManyNodes { .. } => "TooManyNodes",
                _ => "DomainError",
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// On-disk matrix document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MatrixFile {
    pub dim: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixFile {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let n = m.nrows();
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = m[(i, j)];
                data.push([round_sig(z.re), round_sig(z.im)]);
            }
        }
        Self { dim: n, data }
    }

    pub fn to_matrix(&self) -> CliResult<ComplexMatrix> {
        if self.dim == 0 {
            return Err(CliError::Parse("dim must be positive".into()));
        }
        if self.data.len() != self.dim * self.dim {
            return Err(CliError::Parse(format!(
                "data has {} entries, expected dim² = {}",
                self.data.len(),
                self.dim * self.dim
            )));
        }
        if let Some(k) = self.data.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(CliError::Parse(format!(
                "entry ({}, {}) is not finite",
                k / self.dim,
                k % self.dim
            )));
        }
        Ok(ComplexMatrix::from_row_iterator(
            self.dim,
            self.dim,
            self.data.iter().map(|p| Complex64::new(p[0], p[1])),
        ))
    }
}

/// Which validation a matrix document must pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixRole {
    Hermitian,
    Density,
}

#[derive(Debug, Clone)]
pub enum ParsedMatrix {
    Hermitian(HermitianMatrix),
    Density(DensityMatrix),
}

/// Parses and validates a matrix document.
pub fn parse_matrix(text: &str, role: MatrixRole) -> CliResult<ParsedMatrix> {
    let file: MatrixFile = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    let m = file.to_matrix()?;
    Ok(match role {
        MatrixRole::Hermitian => ParsedMatrix::Hermitian(HermitianMatrix::new(m)?),
        MatrixRole::Density => ParsedMatrix::Density(spectra::validate_density(m)?),
    })
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_hermitian(path: &Path) -> CliResult<HermitianMatrix> {
    match parse_matrix(&read_text(path)?, MatrixRole::Hermitian)? {
        ParsedMatrix::Hermitian(h) => Ok(h),
        ParsedMatrix::Density(d) => Ok(d.matrix().clone()),
    }
}

fn read_density(path: &Path) -> CliResult<DensityMatrix> {
    match parse_matrix(&read_text(path)?, MatrixRole::Density)? {
        ParsedMatrix::Density(d) => Ok(d),
        ParsedMatrix::Hermitian(_) => unreachable!("density role yields a density matrix"),
    }
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

fn num(x: f64) -> Value {
    let r = round_sig(x);
    serde_json::Number::from_f64(r)
        .map(Value::Number)
        .unwrap_or_else(|| Value::String(format!("{x}")))
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

/// CSV cell: 12 significant digits, shortest round-trip form.
pub fn format_cell(x: f64) -> String {
    let r = round_sig(x);
    if r != 0.0 && (r.abs() < 1e-4 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GaugeArg {
    TraceZero,
    LogzZero,
}

impl From<GaugeArg> for Gauge {
    fn from(g: GaugeArg) -> Self {
        match g {
            GaugeArg::TraceZero => Gauge::TraceZero,
            GaugeArg::LogzZero => Gauge::LogZZero,
        }
    }
}

fn gauge_name(g: Gauge) -> &'static str {
    match g {
        Gauge::TraceZero => "trace-zero",
        Gauge::LogZZero => "logz-zero",
    }
}

#[derive(Debug, Parser)]
#[command(name = "lazy-ensemble", version, about = "Fit, sample and verify lazy quantum ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the temperature matrix B to a full-range density matrix.
    Fit {
        rho: PathBuf,
        #[arg(long, value_enum, default_value = "trace-zero")]
        gauge: GaugeArg,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// ln Z, occupations and entropy of a given temperature matrix.
    Eval { b: PathBuf },
    /// Fit and draw states from the lazy ensemble of a density matrix.
    Sample {
        rho: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check the partition function of B against independent oracles.
    Verify {
        b: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 512)]
        contour_points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// CSV of the qubit deviation curve δ(β), or its inverse.
    QubitCurve {
        #[arg(long, allow_hyphen_values = true)]
        min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        max: Option<f64>,
        #[arg(long, default_value_t = 241)]
        steps: usize,
        #[arg(long)]
        inverse: bool,
    },
    /// Fit the inverse temperature of a conditional ensemble.
    Conditional {
        h: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        target: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Joint inverse temperature of two non-interacting systems.
    Equalize {
        h: PathBuf,
        h_prime: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        target_a: f64,
        #[arg(long, allow_hyphen_values = true)]
        target_b: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Command output: a JSON document or raw text.
#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Document(Value),
    Text(String),
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub output: Output,
    /// Set when a verification ran but did not pass.
    pub failed: bool,
}

impl Report {
    fn ok(doc: Value) -> Self {
        Self {
            output: Output::Document(doc),
            failed: false,
        }
    }
}

pub fn execute(command: &Command) -> CliResult<Report> {
    match command {
        Command::Fit { rho, gauge, tol } => fit(&read_density(rho)?, (*gauge).into(), *tol).map(Report::ok),
        Command::Eval { b } => eval(&read_hermitian(b)?).map(Report::ok),
        Command::Sample { rho, count, seed, out } => sample(&read_density(rho)?, *count, *seed, out.as_deref()).map(Report::ok),
        Command::Verify {
            b,
            mc_samples,
            contour_points,
            seed,
        } => verify(&read_hermitian(b)?, *mc_samples, *contour_points, *seed),
        Command::QubitCurve {
            min,
            max,
            steps,
            inverse,
        } => qubit_curve(*min, *max, *steps, *inverse).map(|text| Report {
            output: Output::Text(text),
            failed: false,
        }),
        Command::Conditional { h, target, tol } => {
            let obs = Observable::new(read_hermitian(h)?);
            conditional_fit(&obs, *target, *tol).map(Report::ok)
        }
        Command::Equalize {
            h,
            h_prime,
            target_a,
            target_b,
            tol,
            mc_samples,
            seed,
        } => {
            let a = Observable::new(read_hermitian(h)?);
            let b = Observable::new(read_hermitian(h_prime)?);
            equalize(&a, &b, *target_a, *target_b, *tol, *mc_samples, *seed).map(Report::ok)
        }
    }
}

/// Parses `args` (program name first), runs the command and writes its
/// output. Returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{rendered}");
            } else {
                let _ = write!(stderr, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(report) => {
            match report.output {
                Output::Document(doc) => {
                    let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
                }
                Output::Text(text) => {
                    let _ = write!(stdout, "{text}");
                }
            }
            if report.failed {
                1
            } else {
                0
            }
        }
        Err(e) => {
            let doc = json!({ "error": e.kind(), "message": e.to_string() });
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&doc).expect("serializable"));
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn matrix_doc(m: &HermitianMatrix) -> Value {
    serde_json::to_value(MatrixFile::from_matrix(m.as_matrix())).expect("serializable")
}

pub fn fit(rho: &DensityMatrix, gauge: Gauge, tol: f64) -> CliResult<Value> {
    let ens = inverse::fit_temperature(rho, gauge, tol)?;
    Ok(json!({
        "command": "fit",
        "dim": ens.dim(),
        "gauge": gauge_name(gauge),
        "temperature": matrix_doc(ens.temperature()),
        "temperature_spectrum": nums(ens.nodes().nodes()),
        "occupations": nums(ens.occupations()),
        "log_z": num(ens.log_z()),
        "entropy": num(ens.entropy()),
        "iterations": ens.iterations(),
        "residual": num(ens.residual()),
        "tolerance": num(tol),
    }))
}

pub fn eval(b: &HermitianMatrix) -> CliResult<Value> {
    let eig = spectra::eigh(b);
    let nodes = TemperatureSpectrum::new(eig.spectrum.values().to_vec())?;
    let result = partition::evaluate(&nodes)?;
    let rho = HermitianMatrix::from_spectral(&eig.basis, &result.occupations);
    let mut ascending = result.occupations.clone();
    ascending.sort_by(f64::total_cmp);
    Ok(json!({
        "command": "eval",
        "dim": b.dim(),
        "temperature_spectrum": nums(nodes.nodes()),
        "occupations": nums(&result.occupations),
        "density_spectrum": nums(&ascending),
        "log_z": num(result.log_z),
        "entropy": num(result.entropy),
        "density": matrix_doc(&rho),
    }))
}

fn write_states(path: &Path, batch: &sampler::SampleBatch) -> CliResult<()> {
    let mut text = String::new();
    for psi in batch.states() {
        let cells: Vec<String> = psi
            .amplitudes()
            .iter()
            .flat_map(|z| [format_cell(z.re), format_cell(z.im)])
            .collect();
        let _ = writeln!(text, "{}", cells.join(","));
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn sample(rho: &DensityMatrix, count: usize, seed: u64, out: Option<&Path>) -> CliResult<Value> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let ens = inverse::fit_temperature(rho, Gauge::TraceZero, 1e-10)?;
    let stream = RandomStream::new(seed);
    let batch = sampler::sample_lazy_parallel(&ens, count, &stream)?;
    let empirical = sampler::empirical_density_matrix(&batch)?;
    let deviation = (empirical.matrix().as_matrix() - rho.matrix().as_matrix())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let entropy = sampler::estimate_entropy(&batch, &ens)?;
    if let Some(path) = out {
        write_states(path, &batch)?;
    }
    Ok(json!({
        "command": "sample",
        "dim": ens.dim(),
        "seed": seed,
        "accepted": batch.accepted(),
        "proposed": batch.proposed(),
        "acceptance_rate": num(batch.acceptance_rate()),
        "predicted_acceptance": num(sampler::predicted_acceptance(&ens)?),
        "empirical_density": matrix_doc(empirical.matrix()),
        "max_entry_deviation": num(deviation),
        "entropy": num(ens.entropy()),
        "entropy_estimate": { "mean": num(entropy.mean), "std_error": num(entropy.std_error) },
        "states_file": out.map(|p| p.display().to_string()),
    }))
}

/// Monte Carlo agreement threshold used by `verify`.
pub const VERIFY_SIGMAS: f64 = 4.0;
/// Largest spread for which the raw-`Z` contour oracle is compared.
pub const VERIFY_CONTOUR_SPREAD: f64 = 40.0;

pub fn verify(b: &HermitianMatrix, mc_samples: usize, contour_points: usize, seed: u64) -> CliResult<Report> {
    if mc_samples < 2 {
        return Err(CliError::Usage("--mc-samples must be at least 2".into()));
    }
    let eig = spectra::eigh(b);
    let nodes = TemperatureSpectrum::new(eig.spectrum.values().to_vec())?;
    let result = partition::evaluate(&nodes)?;
    let z = result.log_z.exp();
    let mut checks = Vec::new();
    let mut all = true;
    let mut record = |name: &str, passed: Option<bool>, detail: Value| {
        if passed == Some(false) {
            all = false;
        }
        let status = match passed {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "skipped",
        };
        checks.push(json!({ "check": name, "status": status, "detail": detail }));
    };

    if nodes.spread() <= VERIFY_CONTOUR_SPREAD {
        let contour = partition::partition_contour(&nodes, contour_points)?;
        let rel = (contour - z).abs() / z;
        record(
            "contour",
            Some(rel <= 1e-8),
            json!({ "divided_difference": num(z), "contour": num(contour), "relative_error": num(rel), "tolerance": 1e-8 }),
        );
    } else {
        record("contour", None, json!({ "reason": "spread too large for the raw contour integral" }));
    }

    // gradient of ln Z against central differences
    let h = 1e-5;
    let mut worst = 0.0f64;
    for s in 0..nodes.dim() {
        let mut up = nodes.nodes().to_vec();
        let mut dn = up.clone();
        up[s] += h;
        dn[s] -= h;
        let fd = (partition::log_partition(&TemperatureSpectrum::new(up)?)?
            - partition::log_partition(&TemperatureSpectrum::new(dn)?)?)
            / (2.0 * h);
        worst = worst.max((result.occupations[s] + fd).abs());
    }
    record(
        "gradient",
        Some(worst <= 1e-6),
        json!({ "max_error": num(worst), "tolerance": 1e-6 }),
    );

    let stream = RandomStream::new(seed);
    let mc = sampler::estimate_partition(b, mc_samples, &mut stream.split(0))?;
    record(
        "monte_carlo_partition",
        Some(mc.agrees_with(z, VERIFY_SIGMAS)),
        json!({ "expected": num(z), "estimate": num(mc.mean), "std_error": num(mc.std_error), "sigmas": VERIFY_SIGMAS }),
    );

    let ens = LazyEnsemble::from_temperature(b, Gauge::TraceZero)?;
    if nodes.spread() <= sampler::MAX_SAMPLER_SPREAD {
        let batch = sampler::sample_lazy_parallel(&ens, mc_samples, &stream.split(1))?;
        let est = sampler::estimate_entropy(&batch, &ens)?;
        record(
            "monte_carlo_entropy",
            Some(est.agrees_with(result.entropy, VERIFY_SIGMAS) && est.mean >= -VERIFY_SIGMAS * est.std_error),
            json!({ "expected": num(result.entropy), "estimate": num(est.mean), "std_error": num(est.std_error), "sigmas": VERIFY_SIGMAS }),
        );
    } else {
        record("monte_carlo_entropy", None, json!({ "reason": "spread exceeds sampler limit" }));
    }

    if nodes.dim() == 2 {
        let (lo, hi) = (nodes.nodes()[0], nodes.nodes()[1]);
        let beta = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let closed_log_z = -mid + qubit::qubit_log_partition(beta);
        let delta = qubit::qubit_delta(beta);
        let err_z = (closed_log_z - result.log_z).abs() / closed_log_z.abs().max(1e-300);
        let err_l = (result.occupations[0] - (0.5 + delta))
            .abs()
            .max((result.occupations[1] - (0.5 - delta)).abs());
        let passed = (err_z <= 1e-10 || (closed_log_z - result.log_z).abs() <= 1e-15) && err_l <= 1e-10;
        record(
            "qubit_closed_form",
            Some(passed),
            json!({ "beta": num(beta), "log_z_relative_error": num(err_z), "occupation_error": num(err_l), "tolerance": 1e-10 }),
        );
    }

    Ok(Report {
        output: Output::Document(json!({
            "command": "verify",
            "dim": nodes.dim(),
            "log_z": num(result.log_z),
            "entropy": num(result.entropy),
            "passed": all,
            "checks": checks,
        })),
        failed: !all,
    })
}

/// Default grid for the forward curve.
pub const CURVE_BETA_RANGE: (f64, f64) = (-6.0, 6.0);
/// Default grid for the inverse curve.
pub const CURVE_DELTA_RANGE: (f64, f64) = (-0.49, 0.49);

/// Grid `a + (b - a) i / (k - 1)`, computed so symmetric ranges give exactly
/// negated points.
pub fn grid(min: f64, max: f64, steps: usize) -> Vec<f64> {
    let k = (steps - 1) as f64;
    (0..steps)
        .map(|i| (min * (k - i as f64) + max * i as f64) / k)
        .collect()
}

/// `(β, δ(β))` rows, or `(δ, f(δ))` rows when `inverse` is set.
pub fn curve_rows(min: f64, max: f64, steps: usize, inverse: bool) -> CliResult<Vec<(f64, f64)>> {
    if steps < 2 {
        return Err(CliError::Usage("--steps must be at least 2".into()));
    }
    if !(min.is_finite() && max.is_finite() && min < max) {
        return Err(CliError::Usage("--min must be below --max".into()));
    }
    grid(min, max, steps)
        .into_iter()
        .map(|x| {
            let y = if inverse {
                qubit::qubit_inverse_delta(x)?
            } else {
                qubit::qubit_delta(x)
            };
            Ok((x, y))
        })
        .collect()
}

pub fn qubit_curve(min: Option<f64>, max: Option<f64>, steps: usize, inverse: bool) -> CliResult<String> {
    let (dmin, dmax) = if inverse { CURVE_DELTA_RANGE } else { CURVE_BETA_RANGE };
    let rows = curve_rows(min.unwrap_or(dmin), max.unwrap_or(dmax), steps, inverse)?;
    let mut text = String::from(if inverse { "delta,beta\n" } else { "beta,delta\n" });
    for (x, y) in rows {
        let _ = writeln!(text, "{},{}", format_cell(x), format_cell(y));
    }
    Ok(text)
}

pub fn conditional_fit(h: &Observable, target: f64, tol: f64) -> CliResult<Value> {
    let ens = conditional::fit_conditional(h, target, tol)?;
    Ok(json!({
        "command": "conditional",
        "dim": h.dim(),
        "target": num(target),
        "beta": num(ens.beta()),
        "log_z": num(ens.log_z()),
        "mean": num(ens.mean()),
        "observable_spectrum": nums(h.spectrum().values()),
    }))
}

fn marginal(h: &Observable, target: f64, tol: f64) -> CliResult<ConditionalEnsemble> {
    Ok(conditional::fit_conditional(h, target, tol)?)
}

pub fn equalize(
    a: &Observable,
    b: &Observable,
    target_a: f64,
    target_b: f64,
    tol: f64,
    mc_samples: usize,
    seed: u64,
) -> CliResult<Value> {
    let ea = marginal(a, target_a, tol)?;
    let eb = marginal(b, target_b, tol)?;
    let joint = conditional::joint_fit(&ea, &eb, tol)?;
    let residual = conditional::factorization_check(a, b, joint.beta)?;
    let mc = if mc_samples >= 2 {
        let r = conditional::factorization_monte_carlo(a, b, joint.beta, mc_samples, 3.0, &mut RandomStream::new(seed))?;
        json!({
            "expected": num(r.expected),
            "estimate": num(r.estimate.mean),
            "std_error": num(r.estimate.std_error),
            "sigmas": 3.0,
            "passed": r.passed,
        })
    } else {
        Value::Null
    };
    Ok(json!({
        "command": "equalize",
        "beta_a": num(ea.beta()),
        "beta_b": num(eb.beta()),
        "beta_joint": num(joint.beta),
        "joint_mean": num(joint.mean),
        "joint_log_z": num(joint.log_z),
        "between": joint.is_between(1e-9),
        "factorization_residual": num(residual),
        "factorization_monte_carlo": mc,
    }))
}
