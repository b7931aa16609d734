//! Run configuration, subcommands and the CSV/JSON output schemas.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use faer::Side;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::{ClassifyConfig, ExteriorPolicy, SpectrumConfig, SpectrumSlice};
use crate::operators::{assemble_schrodinger, build_grid, Grid, Scheme, MIN_POINTS};
use crate::scan::{annotate_branches, detect_bifurcations, rho_scan_each, scan_nodes, track_all, BifurcationEvent, ScanConfig};
use crate::semiclassical::{
    compare_routes, epsilon_to_rho, e0, e1, lyapunov_schmidt_solve, semiclassical_grid, sommerfeld_solve, CompareConfig,
    CompareRow, LsConfig, ModeSelector, Parity,
};
use crate::specfun::{abs_gamma_sq, gamma, SpecialFunctionError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("check failed: {0}")]
    Check(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<SpecialFunctionError> for CliError {
    fn from(e: SpecialFunctionError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) | CliError::Config { .. } => 2,
            CliError::Numerical(_) | CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => 3,
        }
    }

    fn config(key: &str, message: impl Into<String>) -> Self {
        CliError::Config { key: key.to_string(), message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Contents of the flat TOML config file; every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid_l: Option<f64>,
    pub grid_n: Option<i64>,
    pub scheme: Option<String>,
    pub rho_start: Option<f64>,
    pub rho_end: Option<f64>,
    pub rho_step: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub modes: Option<Vec<String>>,
    pub re_threshold: Option<f64>,
    pub localization_threshold: Option<f64>,
    pub continuation_jump_bound: Option<f64>,
    pub absorbing_from_rho: Option<f64>,
    pub ls_half_length: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub threads: Option<i64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| {
            let message = e.message().to_string();
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field"))
                .map(str::to_string)
                .or_else(|| {
                    // the span covers the offending value; its key starts the line
                    let start = e.span()?.start;
                    let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
                    Some(text[line_start..start].split('=').next()?.trim().to_string())
                })
                .unwrap_or_default();
            CliError::config(&key, message.trim())
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::config("config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn merge(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            grid_l: other.grid_l.or(self.grid_l),
            grid_n: other.grid_n.or(self.grid_n),
            scheme: other.scheme.or(self.scheme),
            rho_start: other.rho_start.or(self.rho_start),
            rho_end: other.rho_end.or(self.rho_end),
            rho_step: other.rho_step.or(self.rho_step),
            epsilons: other.epsilons.or(self.epsilons),
            modes: other.modes.or(self.modes),
            re_threshold: other.re_threshold.or(self.re_threshold),
            localization_threshold: other.localization_threshold.or(self.localization_threshold),
            continuation_jump_bound: other.continuation_jump_bound.or(self.continuation_jump_bound),
            absorbing_from_rho: other.absorbing_from_rho.or(self.absorbing_from_rho),
            ls_half_length: other.ls_half_length.or(self.ls_half_length),
            out: other.out.or(self.out),
            format: other.format.or(self.format),
            threads: other.threads.or(self.threads),
        }
    }
}

/// Validated configuration shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub grid_l: f64,
    pub grid_n: usize,
    pub scheme: Scheme,
    pub rho_start: f64,
    pub rho_end: f64,
    pub rho_step: f64,
    pub epsilons: Vec<f64>,
    pub modes: Vec<ModeSelector>,
    pub re_threshold: f64,
    pub localization_threshold: f64,
    pub continuation_jump_bound: f64,
    pub absorbing_from_rho: f64,
    pub ls_half_length: f64,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            grid_l: 40.0,
            grid_n: 512,
            scheme: Scheme::FourierCollocation,
            rho_start: 0.05,
            rho_end: 1.6,
            rho_step: 0.01,
            epsilons: vec![0.5, 0.4, 0.3, 0.2, 0.1],
            modes: ModeSelector::both().to_vec(),
            re_threshold: 1e-6,
            localization_threshold: 0.9,
            continuation_jump_bound: 0.05,
            absorbing_from_rho: 1.25,
            ls_half_length: 20.0,
            out: PathBuf::from("out"),
            format: OutputFormat::Csv,
            threads: None,
        }
    }
}

/// Upper end of the semiclassical regime accepted by the ε-driven commands.
pub const EPSILON_MAX: f64 = 0.6;

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(key, format!("must be finite and > 0, got {v}")))
    }
}

impl RunConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self, CliError> {
        let d = RunConfig::default();
        let grid_l = positive("grid_l", file.grid_l.unwrap_or(d.grid_l))?;
        let grid_n = match file.grid_n {
            None => d.grid_n,
            Some(n) if n >= MIN_POINTS as i64 && n % 2 == 0 => n as usize,
            Some(n) => return Err(CliError::config("grid_n", format!("must be even and >= {MIN_POINTS}, got {n}"))),
        };
        let scheme = match file.scheme {
            None => d.scheme,
            Some(s) => s.parse().map_err(|e| CliError::config("scheme", format!("{e}")))?,
        };
        let rho_start = file.rho_start.unwrap_or(d.rho_start);
        if !(rho_start.is_finite() && rho_start >= 0.0) {
            return Err(CliError::config("rho_start", format!("must be finite and >= 0, got {rho_start}")));
        }
        let rho_end = file.rho_end.unwrap_or(d.rho_end);
        if !(rho_end.is_finite() && rho_end > rho_start) {
            return Err(CliError::config("rho_end", format!("empty range: rho_end = {rho_end} must exceed rho_start = {rho_start}")));
        }
        let rho_step = positive("rho_step", file.rho_step.unwrap_or(d.rho_step))?;
        let epsilons = file.epsilons.unwrap_or(d.epsilons);
        if epsilons.is_empty() {
            return Err(CliError::config("epsilons", "list is empty"));
        }
        if let Some(e) = epsilons.iter().find(|e| !(e.is_finite() && **e > 0.0 && **e <= EPSILON_MAX)) {
            return Err(CliError::config("epsilons", format!("{e} outside (0, {EPSILON_MAX}]")));
        }
        let modes = match file.modes {
            None => d.modes,
            Some(list) if list.is_empty() => return Err(CliError::config("modes", "list is empty")),
            Some(list) => list
                .iter()
                .map(|m| m.parse::<ModeSelector>().map_err(|e| CliError::config("modes", e.to_string())))
                .collect::<Result<_, _>>()?,
        };
        let re_threshold = positive("re_threshold", file.re_threshold.unwrap_or(d.re_threshold))?;
        let localization_threshold = file.localization_threshold.unwrap_or(d.localization_threshold);
        if !(localization_threshold > 0.0 && localization_threshold <= 1.0) {
            return Err(CliError::config("localization_threshold", format!("must lie in (0, 1], got {localization_threshold}")));
        }
        let continuation_jump_bound =
            positive("continuation_jump_bound", file.continuation_jump_bound.unwrap_or(d.continuation_jump_bound))?;
        let absorbing_from_rho = file.absorbing_from_rho.unwrap_or(d.absorbing_from_rho);
        if !(absorbing_from_rho.is_finite() && absorbing_from_rho >= 0.0) {
            return Err(CliError::config("absorbing_from_rho", format!("must be finite and >= 0, got {absorbing_from_rho}")));
        }
        let ls_half_length = positive("ls_half_length", file.ls_half_length.unwrap_or(d.ls_half_length))?;
        let threads = match file.threads {
            None => None,
            Some(t) if t >= 1 => Some(t as usize),
            Some(t) => return Err(CliError::config("threads", format!("must be >= 1, got {t}"))),
        };
        Ok(RunConfig {
            grid_l,
            grid_n,
            scheme,
            rho_start,
            rho_end,
            rho_step,
            epsilons,
            modes,
            re_threshold,
            localization_threshold,
            continuation_jump_bound,
            absorbing_from_rho,
            ls_half_length,
            out: file.out.unwrap_or(d.out),
            format: file.format.unwrap_or(d.format),
            threads,
        })
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        build_grid(self.grid_l, self.grid_n, self.scheme).map_err(|e| CliError::config("grid_n", e.to_string()))
    }

    pub fn spectrum_config(&self) -> SpectrumConfig {
        SpectrumConfig {
            classify: ClassifyConfig { localization_threshold: self.localization_threshold, ..ClassifyConfig::default() },
            exterior: ExteriorPolicy::Auto { absorbing_from_rho: self.absorbing_from_rho },
            re_threshold: self.re_threshold,
            ..SpectrumConfig::default()
        }
    }

    pub fn scan_config(&self) -> ScanConfig {
        ScanConfig {
            spectrum: self.spectrum_config(),
            continuation_jump_bound: self.continuation_jump_bound,
            ..ScanConfig::default()
        }
    }

    pub fn compare_config(&self) -> CompareConfig {
        let d = CompareConfig::default();
        CompareConfig {
            ls: LsConfig { epsilon_max: EPSILON_MAX, ..d.ls },
            spectrum: SpectrumConfig { exterior: ExteriorPolicy::Absorbing, ..self.spectrum_config() },
            ls_half_length: self.ls_half_length,
            ls_scheme: self.scheme,
            ..d
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "transverse-nls", version, about = "Transverse-instability spectrum of the hyperbolic-NLS line soliton")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Analytic self-checks of the discretization and special functions
    Validate,
    /// Spectrum over a ρ range; writes scan.csv and events.json
    Scan,
    /// Lyapunov-Schmidt solves per ε and mode; writes semiclassical.csv
    Semiclassical,
    /// Growth rates by all four routes; writes compare.csv
    Compare,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub rho_start: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub rho_end: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub rho_step: Option<f64>,
    /// Comma-separated list, e.g. 0.5,0.4,0.3
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub epsilons: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid_n: Option<i64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid_l: Option<f64>,
    /// fourier or fd4
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub threads: Option<i64>,
}

impl Overrides {
    pub fn to_file(&self) -> Result<ConfigFile, CliError> {
        let epsilons = match &self.epsilons {
            None => None,
            Some(s) if s.trim().is_empty() => return Err(CliError::Usage("--epsilons needs at least one value".into())),
            Some(s) => Some(
                s.split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("--epsilons: `{}`: {e}", t.trim()))))
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        Ok(ConfigFile {
            grid_l: self.grid_l,
            grid_n: self.grid_n,
            scheme: self.scheme.clone(),
            rho_start: self.rho_start,
            rho_end: self.rho_end,
            rho_step: self.rho_step,
            epsilons,
            out: self.out.clone(),
            format: self.format,
            threads: self.threads,
            ..ConfigFile::default()
        })
    }

    /// Config file (if any) overlaid by the command-line flags, validated.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        RunConfig::from_file(base.merge(self.to_file()?))
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub rho: f64,
    /// Empty on the error trailer row.
    pub eig_index: Option<usize>,
    pub re_lambda: f64,
    pub im_lambda: f64,
    pub residual: f64,
    pub localization: f64,
    pub label: String,
}

impl ScanRow {
    pub const HEADER: [&'static str; 7] = ["rho", "eig_index", "re_lambda", "im_lambda", "residual", "localization", "label"];

    fn record(&self) -> Vec<String> {
        vec![
            fmt_f64(self.rho),
            self.eig_index.map(|i| i.to_string()).unwrap_or_default(),
            fmt_f64(self.re_lambda),
            fmt_f64(self.im_lambda),
            fmt_f64(self.residual),
            fmt_f64(self.localization),
            self.label.clone(),
        ]
    }

    pub fn from_slice(slice: &SpectrumSlice) -> Vec<ScanRow> {
        (0..slice.len())
            .map(|j| ScanRow {
                rho: slice.rho,
                eig_index: Some(j),
                re_lambda: slice.eigenvalues[j].re,
                im_lambda: slice.eigenvalues[j].im,
                residual: slice.residuals[j],
                localization: slice.localization[j],
                label: slice.labels[j].as_str().to_string(),
            })
            .collect()
    }

    pub fn error_trailer(rho: f64, message: &str) -> ScanRow {
        ScanRow {
            rho,
            eig_index: None,
            re_lambda: f64::NAN,
            im_lambda: f64::NAN,
            residual: f64::NAN,
            localization: f64::NAN,
            label: format!("error: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareCsvRow {
    pub epsilon: f64,
    pub rho: f64,
    pub mode: String,
    pub route: String,
    pub growth_rate: f64,
    pub im_omega: f64,
    pub status: String,
}

impl CompareCsvRow {
    pub const HEADER: [&'static str; 7] = ["epsilon", "rho", "mode", "route", "growth_rate", "im_omega", "status"];

    fn record(&self) -> Vec<String> {
        vec![
            fmt_f64(self.epsilon),
            fmt_f64(self.rho),
            self.mode.clone(),
            self.route.clone(),
            fmt_f64(self.growth_rate),
            fmt_f64(self.im_omega),
            self.status.clone(),
        ]
    }
}

impl From<&CompareRow> for CompareCsvRow {
    fn from(r: &CompareRow) -> Self {
        let mode = match r.mode {
            crate::semiclassical::ModeIndex::Mode0 => "mode0",
            crate::semiclassical::ModeIndex::Mode1 => "mode1",
        };
        CompareCsvRow {
            epsilon: r.epsilon,
            rho: r.rho,
            mode: mode.to_string(),
            route: r.route.as_str().to_string(),
            growth_rate: r.growth_rate,
            im_omega: r.im_omega,
            status: r.status.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalRow {
    pub epsilon: f64,
    pub rho: f64,
    pub mode: String,
    pub re_curly_e: f64,
    pub im_curly_e: f64,
    pub re_omega: f64,
    pub im_omega: f64,
    pub growth_rate: f64,
    pub iterations: usize,
    pub residual: f64,
    pub psi_bound_constant: f64,
    pub omega_bound_constant: f64,
    pub status: String,
}

impl SemiclassicalRow {
    pub const HEADER: [&'static str; 13] = [
        "epsilon",
        "rho",
        "mode",
        "re_curly_e",
        "im_curly_e",
        "re_omega",
        "im_omega",
        "growth_rate",
        "iterations",
        "residual",
        "psi_bound_constant",
        "omega_bound_constant",
        "status",
    ];

    fn record(&self) -> Vec<String> {
        vec![
            fmt_f64(self.epsilon),
            fmt_f64(self.rho),
            self.mode.clone(),
            fmt_f64(self.re_curly_e),
            fmt_f64(self.im_curly_e),
            fmt_f64(self.re_omega),
            fmt_f64(self.im_omega),
            fmt_f64(self.growth_rate),
            self.iterations.to_string(),
            fmt_f64(self.residual),
            fmt_f64(self.psi_bound_constant),
            fmt_f64(self.omega_bound_constant),
            self.status.clone(),
        ]
    }
}

/// Writes rows as CSV (`<stem>.csv`) or a JSON array (`<stem>.json`).
struct TableWriter {
    inner: TableInner,
}

enum TableInner {
    Csv(csv::Writer<File>),
    Json { file: File, first: bool },
}

impl TableWriter {
    fn create(dir: &Path, stem: &str, format: OutputFormat, header: &[&str]) -> Result<(Self, PathBuf), CliError> {
        fs::create_dir_all(dir)?;
        match format {
            OutputFormat::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(header)?;
                Ok((TableWriter { inner: TableInner::Csv(w) }, path))
            }
            OutputFormat::Json => {
                let path = dir.join(format!("{stem}.json"));
                let mut file = File::create(&path)?;
                file.write_all(b"[")?;
                Ok((TableWriter { inner: TableInner::Json { file, first: true } }, path))
            }
        }
    }

    fn row<T: Serialize>(&mut self, record: Vec<String>, value: &T) -> Result<(), CliError> {
        match &mut self.inner {
            TableInner::Csv(w) => w.write_record(&record)?,
            TableInner::Json { file, first } => {
                if !*first {
                    file.write_all(b",")?;
                }
                *first = false;
                file.write_all(b"\n")?;
                serde_json::to_writer(&mut *file, value)?;
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<(), CliError> {
        match self.inner {
            TableInner::Csv(mut w) => w.flush()?,
            TableInner::Json { mut file, .. } => file.write_all(b"\n]\n")?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

fn symmetric_spectrum(well_depth: f64, shift: f64, grid: &Grid) -> Result<(Vec<f64>, faer::Mat<f64>), CliError> {
    let op = assemble_schrodinger(grid, well_depth, shift);
    let m = op.real().expect("Schrödinger operators are real");
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|e| CliError::Numerical(format!("{e:?}")))?;
    let values = (0..m.nrows()).map(|i| evd.S()[i]).collect();
    Ok((values, evd.U().to_owned()))
}

fn zero_mode_check(name: &str, well_depth: f64, grid: &Grid, shape: impl Fn(f64) -> f64) -> Result<CheckResult, CliError> {
    let (values, vectors) = symmetric_spectrum(well_depth, 1.0, grid)?;
    let (index, value) = values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("nonempty spectrum");
    let exact: Vec<f64> = grid.nodes.iter().map(|&x| shape(x)).collect();
    let norm = exact.iter().map(|v| v * v).sum::<f64>().sqrt();
    let overlap = (0..grid.n_points).map(|j| vectors[(j, index)] * exact[j]).sum::<f64>().abs() / norm;
    Ok(check(
        name,
        value.abs() <= 1e-8 && (1.0 - overlap).abs() <= 1e-8,
        format!("eigenvalue {value:.3e} (tol 1e-8), eigenvector overlap {overlap:.12}"),
    ))
}

/// The analytic self-check suite.
pub fn cmd_validate(config: &RunConfig) -> Result<Vec<CheckResult>, CliError> {
    let grid = config.grid()?;
    let mut out = Vec::new();

    let (values, _) = symmetric_spectrum(4.0, 0.0, &grid)?;
    let err0 = (values[0] + e0()).abs();
    let err1 = (values[1] + e1()).abs();
    out.push(check(
        "l0_eigenvalues",
        err0 <= 1e-6 && err1 <= 1e-6 && values[2] > -1e-6,
        format!("{:.9} vs {:.9}, {:.9} vs {:.9} (tol 1e-6)", values[0], -e0(), values[1], -e1()),
    ));
    out.push(zero_mode_check("l_minus_zero_mode", 2.0, &grid, |x| 1.0 / x.cosh())?);
    out.push(zero_mode_check("l_plus_zero_mode", 6.0, &grid, |x| x.tanh() / x.cosh())?);

    let mut worst: f64 = 0.0;
    let mut factorial = 1.0;
    for n in 1..=20 {
        worst = worst.max((gamma(n as f64)? / factorial - 1.0).abs());
        factorial *= n as f64;
    }
    for &y in &[0.5, 1.0, 3.0, 7.0] {
        let pi = std::f64::consts::PI;
        worst = worst.max((abs_gamma_sq(0.5, y)? * (pi * y).cosh() / pi - 1.0).abs());
        worst = worst.max((abs_gamma_sq(1.0, y)? * (pi * y).sinh() / (pi * y) - 1.0).abs());
    }
    out.push(check("gamma_identities", worst <= 1e-12, format!("max relative deviation {worst:.3e} (tol 1e-12)")));

    let dyadic = build_grid(16.0, 1024, Scheme::FourierCollocation).map_err(|e| CliError::Numerical(e.to_string()))?;
    let f: Vec<Complex64> = dyadic.nodes.iter().map(|&x| Complex64::new((-x * x).exp(), 0.0)).collect();
    let mut worst: f64 = 0.0;
    for &k in &[1.0, 3.0, 6.0] {
        let (_, a) = sommerfeld_solve(&dyadic, &f, Complex64::new(k, 0.0), Parity::Even).map_err(|e| CliError::Numerical(e.to_string()))?;
        let exact = Complex64::new(std::f64::consts::PI.sqrt() * (-k * k / 4.0).exp(), 0.0) / Complex64::new(0.0, 2.0 * k);
        worst = worst.max((a / exact - 1.0).norm());
    }
    out.push(check("gaussian_sommerfeld", worst <= 1e-8, format!("max relative amplitude error {worst:.3e} (tol 1e-8)")));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanSummary {
    pub rows: usize,
    pub slices: usize,
    pub events: Vec<BifurcationEvent>,
    pub files: Vec<PathBuf>,
}

/// Writes the table and `events.json` for every slice up to the first
/// failure; a failure adds an error trailer row and is returned as
/// [`CliError::Numerical`] after the files are flushed.
pub fn cmd_scan(config: &RunConfig) -> Result<ScanSummary, CliError> {
    let grid = config.grid()?;
    let nodes = scan_nodes(config.rho_start, config.rho_end, config.rho_step).map_err(|e| CliError::config("rho_end", e.to_string()))?;
    let scan_config = config.scan_config();
    let results = rho_scan_each(&grid, &nodes, &scan_config);

    let (mut table, table_path) = TableWriter::create(&config.out, "scan", config.format, &ScanRow::HEADER)?;
    let mut slices = Vec::new();
    let mut rows = 0;
    let mut failure = None;
    for (rho, result) in nodes.iter().zip(results) {
        match result {
            Ok(slice) => {
                for row in ScanRow::from_slice(&slice) {
                    table.row(row.record(), &row)?;
                    rows += 1;
                }
                slices.push(slice);
            }
            Err(e) => {
                let row = ScanRow::error_trailer(*rho, &e.to_string());
                table.row(row.record(), &row)?;
                failure = Some(e.to_string());
                break;
            }
        }
    }
    table.finish()?;

    let mut branches = track_all(&slices, &scan_config);
    let events = detect_bifurcations(&branches, &scan_config);
    annotate_branches(&mut branches, &events, config.rho_start);
    let events_path = config.out.join("events.json");
    let mut file = File::create(&events_path)?;
    serde_json::to_writer_pretty(&mut file, &events)?;
    file.write_all(b"\n")?;

    if let Some(message) = failure {
        return Err(CliError::Numerical(message));
    }
    Ok(ScanSummary { rows, slices: slices.len(), events, files: vec![table_path, events_path] })
}

/// Lyapunov-Schmidt solve for every (ε, mode); failed solves are reported
/// per row and turn the exit status into a numerical failure.
pub fn cmd_semiclassical(config: &RunConfig) -> Result<Vec<SemiclassicalRow>, CliError> {
    let jobs: Vec<(f64, ModeSelector)> = config.epsilons.iter().flat_map(|&e| config.modes.iter().map(move |m| (e, *m))).collect();
    let ls = LsConfig { epsilon_max: EPSILON_MAX, ..LsConfig::default() };
    let rows: Vec<SemiclassicalRow> = jobs
        .par_iter()
        .map(|&(epsilon, mode)| {
            let rho = epsilon_to_rho(epsilon).unwrap_or(f64::NAN);
            let solved = semiclassical_grid(epsilon, &mode, config.ls_half_length, config.scheme)
                .and_then(|g| lyapunov_schmidt_solve(epsilon, &mode, &g, &ls));
            match solved {
                Ok(s) => SemiclassicalRow {
                    epsilon,
                    rho,
                    mode: mode.name().to_string(),
                    re_curly_e: s.curly_e.re,
                    im_curly_e: s.curly_e.im,
                    re_omega: s.omega.re,
                    im_omega: s.omega.im,
                    growth_rate: s.growth_rate(),
                    iterations: s.iterations,
                    residual: s.residual,
                    psi_bound_constant: s.psi_bound_constant,
                    omega_bound_constant: s.omega_bound_constant,
                    status: "ok".into(),
                },
                Err(e) => SemiclassicalRow {
                    epsilon,
                    rho,
                    mode: mode.name().to_string(),
                    re_curly_e: f64::NAN,
                    im_curly_e: f64::NAN,
                    re_omega: f64::NAN,
                    im_omega: f64::NAN,
                    growth_rate: f64::NAN,
                    iterations: 0,
                    residual: f64::NAN,
                    psi_bound_constant: f64::NAN,
                    omega_bound_constant: f64::NAN,
                    status: format!("error: {e}"),
                },
            }
        })
        .collect();
    let (mut table, _) = TableWriter::create(&config.out, "semiclassical", config.format, &SemiclassicalRow::HEADER)?;
    for row in &rows {
        table.row(row.record(), row)?;
    }
    table.finish()?;
    if let Some(bad) = rows.iter().find(|r| r.status != "ok") {
        return Err(CliError::Numerical(format!("epsilon {} {}: {}", bad.epsilon, bad.mode, bad.status)));
    }
    Ok(rows)
}

/// One row per (ε, mode, route) for the selected modes, in input order.
pub fn cmd_compare(config: &RunConfig) -> Result<Vec<CompareCsvRow>, CliError> {
    let grid = config.grid()?;
    let rows: Vec<CompareCsvRow> = compare_routes(&config.epsilons, &grid, &config.compare_config())
        .iter()
        .filter(|r| config.modes.iter().any(|m| m.index == r.mode))
        .map(CompareCsvRow::from)
        .collect();
    let (mut table, _) = TableWriter::create(&config.out, "compare", config.format, &CompareCsvRow::HEADER)?;
    for row in &rows {
        table.row(row.record(), row)?;
    }
    table.finish()?;
    Ok(rows)
}

pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanRow>, CliError> {
    Ok(csv::Reader::from_path(path)?.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_compare_csv(path: &Path) -> Result<Vec<CompareCsvRow>, CliError> {
    Ok(csv::Reader::from_path(path)?.deserialize().collect::<Result<_, _>>()?)
}

/// Entry point behind `main`; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let config = match cli.overrides.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Some(threads) = config.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: thread pool already initialized: {e}");
        }
    }
    let outcome = match cli.command {
        Command::Validate => cmd_validate(&config).and_then(|checks| {
            for c in &checks {
                println!("{c}");
            }
            match checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect::<Vec<_>>() {
                failed if failed.is_empty() => Ok(()),
                failed => Err(CliError::Check(failed.join(", "))),
            }
        }),
        Command::Scan => cmd_scan(&config).map(|s| {
            println!("{} slices, {} rows", s.slices, s.rows);
            for e in &s.events {
                println!("{:?} at rho = {:.6} in [{:.4}, {:.4}]", e.kind, e.rho_estimate, e.bracket.0, e.bracket.1);
            }
        }),
        Command::Semiclassical => cmd_semiclassical(&config).map(|rows| {
            for r in &rows {
                println!("eps = {} {}: growth rate {:.6e} after {} iterations", r.epsilon, r.mode, r.growth_rate, r.iterations);
            }
        }),
        Command::Compare => cmd_compare(&config).map(|rows| {
            for r in &rows {
                println!("eps = {} {} {}: {:.6e} ({})", r.epsilon, r.mode, r.route, r.growth_rate, r.status);
            }
        }),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
