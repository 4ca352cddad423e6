//! The `fplsr` command-line tool.
//!
//! Subcommands: `simulate`, `fit`, `predict` and `report`. Every command
//! writes a `manifest.json` into its output directory. Exit status is 0 on
//! success, 2 for bad input or configuration and 3 for numerical failure.

pub mod io;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisSystem, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::fdata::{default_lambda_grid, select_nbasis, smooth_curves, CurveSet, SmoothReport};
use crate::ffrm::{amse, fit_ffr, FfrModel, FitMethod, DEFAULT_AMSE_GRID, DEFAULT_COMPONENTS};
use crate::linalg::linspace;
use crate::simlab::{run_experiment, ExperimentConfig, LossRow, OneOrMany};

use io::{fmt_f64, read_curves, read_json, write_curves, write_json, write_surface, CurveTable, Orientation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const THREADS_ENV: &str = "FPLSR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fplsr", version, about = "Function-on-function PLS regression over B-spline bases")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo experiment from a JSON configuration.
    Simulate(SimulateArgs),
    /// Smooth curve tables and fit a regression model.
    Fit(FitArgs),
    /// Predict response curves with a fitted model.
    Predict(PredictArgs),
    /// Render SVG plots and a summary from an experiment CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configuration's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "fplsr-out")]
    pub out: PathBuf,
    /// Restrict to these methods (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<FitMethod>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Basis sizes to run, e.g. `10` or `10,20,30,40`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub nbasis: Option<Vec<usize>>,
    /// AMSE evaluation grid size.
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Optional JSON file supplying defaults for the options below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Predictor table; repeat for several predictors.
    #[arg(long)]
    pub predictor: Vec<PathBuf>,
    #[arg(long)]
    pub method: Option<FitMethod>,
    #[arg(long)]
    pub components: Option<usize>,
    /// Basis size, or a comma-separated list of candidates chosen by GCV
    /// separately for each variable.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub nbasis: Option<Vec<usize>>,
    /// Points per axis for surfaces and for the AMSE grid.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, value_enum)]
    pub orientation: Option<Orientation>,
    #[arg(long, default_value = "fplsr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, required = true)]
    pub predictor: Vec<PathBuf>,
    /// Observed responses; when given, AMSE_p is reported.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Orientation::Col)]
    pub orientation: Orientation,
    #[arg(long, default_value_t = DEFAULT_AMSE_GRID)]
    pub grid: usize,
    #[arg(long, default_value = "fplsr-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Experiment CSV written by `simulate`.
    pub input: PathBuf,
    #[arg(long, default_value = "fplsr-report")]
    pub out: PathBuf,
}

/// Options for `fit` that may come from a JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub response: Option<PathBuf>,
    #[serde(default)]
    pub predictors: Vec<PathBuf>,
    pub method: Option<FitMethod>,
    pub components: Option<usize>,
    pub nbasis: Option<OneOrMany<usize>>,
    pub grid: Option<usize>,
    pub orientation: Option<Orientation>,
}

/// Record of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
    pub version: String,
    pub wall_seconds: f64,
}

/// Smoothing summary for one variable of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableFit {
    pub source: PathBuf,
    pub n_basis: usize,
    pub lambda: f64,
    pub edf: f64,
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub model: FfrModel,
    pub response_argvals: Vec<f64>,
    pub response: VariableFit,
    pub predictors: Vec<VariableFit>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT };
        Self { code, message: e.to_string() }
    }
}

fn input_error(msg: impl Into<String>) -> CliError {
    CliError { code: EXIT_INPUT, message: msg.into() }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| input_error(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_manifest(
    command: &str,
    config: Option<&Path>,
    inputs: Vec<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    started: Instant,
) -> CliResult<()> {
    let m = RunManifest {
        command: command.to_string(),
        config: config.map(Path::to_path_buf),
        inputs,
        out_dir: out.to_path_buf(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&out.join("manifest.json"), &m)?;
    Ok(())
}

/// Thread cap from the environment, if set.
pub fn threads_from_env() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(input_error(format!("{THREADS_ENV}: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(input_error(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
        },
    }
}

fn write_losses(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "K", "rho", "rep", "amse", "amse_p", "fit_seconds", "ls_singular", "failure"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            r.k.to_string(),
            fmt_f64(r.rho),
            r.rep.to_string(),
            fmt_f64(r.amse),
            fmt_f64(r.amse_p),
            fmt_f64(r.fit_seconds),
            r.ls_singular.to_string(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    let mut cfg: ExperimentConfig = read_json(&a.config)
        .map_err(|e| input_error(format!("config {}: {e}", a.config.display())))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if !a.method.is_empty() {
        cfg.methods = a.method.clone();
    }
    if let Some(h) = a.components {
        cfg.h = h;
    }
    if let Some(ks) = &a.nbasis {
        cfg.k = OneOrMany::Many(ks.clone());
    }
    if let Some(g) = a.grid {
        cfg.amse_grid = g;
    }
    if let Some(env) = threads_from_env()? {
        cfg.threads = Some(cfg.threads.map_or(env, |t| t.min(env)));
    }
    cfg.cells()?;
    prepare_out(&a.out)?;
    let result = run_experiment(&cfg)?;
    let csv_path = a.out.join("experiment.csv");
    report::write_experiment_csv(&csv_path, &result.records)?;
    write_losses(&a.out.join("losses.csv"), &result.losses)?;
    write_manifest("simulate", Some(&a.config), vec![a.config.clone()], &a.out, Some(cfg.seed), started)?;
    println!("wrote {} records to {}", result.records.len(), csv_path.display());
    Ok(())
}

/// Smooths a table with a fixed basis size or picks one from candidates.
fn smooth_table(table: &CurveTable, ks: &[usize]) -> Result<(CurveSet, SmoothReport, usize)> {
    let domain = domain_of(&table.argvals)?;
    let grid = default_lambda_grid();
    if let [k] = ks {
        let bs = BasisSystem::uniform(domain.0, domain.1, *k, DEFAULT_ORDER)?;
        let (cs, rep) = smooth_curves(&table.values, &table.argvals, &bs, &grid)?;
        Ok((cs, rep, *k))
    } else {
        select_nbasis(&table.values, &table.argvals, domain, DEFAULT_ORDER, ks, &grid)
    }
}

fn domain_of(argvals: &[f64]) -> Result<(f64, f64)> {
    match (argvals.first(), argvals.last()) {
        (Some(&a), Some(&b)) if b > a => Ok((a, b)),
        _ => Err(Error::InvalidInput("argument values must be strictly increasing".into())),
    }
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let started = Instant::now();
    let file: FitConfig = match &a.config {
        Some(p) => read_json(p).map_err(|e| input_error(format!("config {}: {e}", p.display())))?,
        None => FitConfig::default(),
    };
    let response_path = a
        .response
        .clone()
        .or(file.response.clone())
        .ok_or_else(|| input_error("--response is required"))?;
    let predictor_paths = if a.predictor.is_empty() { file.predictors.clone() } else { a.predictor.clone() };
    if predictor_paths.is_empty() {
        return Err(input_error("at least one --predictor is required"));
    }
    let method = a.method.or(file.method).unwrap_or(FitMethod::Nipals);
    let h = a.components.or(file.components).unwrap_or(DEFAULT_COMPONENTS);
    let ks = a
        .nbasis
        .clone()
        .or(file.nbasis.as_ref().map(OneOrMany::to_vec))
        .ok_or_else(|| input_error("--nbasis is required"))?;
    let grid = a.grid.or(file.grid).unwrap_or(DEFAULT_AMSE_GRID);
    if grid < 2 {
        return Err(input_error("--grid must be at least 2"));
    }
    let orientation = a.orientation.or(file.orientation).unwrap_or_default();

    let y_table = read_curves(&response_path, orientation)?;
    let (y, y_rep, y_k) = smooth_table(&y_table, &ks)?;
    let mut xs = Vec::new();
    let mut x_fits = Vec::new();
    for p in &predictor_paths {
        let t = read_curves(p, orientation)?;
        if t.values.nrows() != y_table.values.nrows() {
            return Err(input_error(format!(
                "{} has {} curves, response has {}",
                p.display(),
                t.values.nrows(),
                y_table.values.nrows()
            )));
        }
        let (cs, rep, k) = smooth_table(&t, &ks)?;
        x_fits.push(VariableFit { source: p.clone(), n_basis: k, lambda: rep.lambda, edf: rep.edf });
        xs.push(cs);
    }
    let model = fit_ffr(&y, &xs, h, method)?;
    if model.truncated() {
        eprintln!("warning: PLS stopped before {h} components (no covariance left)");
    }

    prepare_out(&a.out)?;
    let fitted = model.predict(&xs)?;
    let fitted_vals = fitted.eval(&y_table.argvals)?;
    write_curves(
        &a.out.join("fitted.csv"),
        &CurveTable { argvals: y_table.argvals.clone(), names: y_table.names.clone(), values: fitted_vals },
        orientation,
    )?;
    let (ta, tb) = model.response_basis.domain();
    let tgrid = linspace(ta, tb, grid);
    for (m, block) in model.predictors.iter().enumerate() {
        let (sa, sb) = block.basis.domain();
        let sgrid = linspace(sa, sb, grid);
        let surf = model.coefficient_surface(m, &sgrid, &tgrid)?;
        write_surface(&a.out.join(format!("surface_{}.csv", m + 1)), &sgrid, &tgrid, &surf)?;
    }
    let in_sample = amse(&y, &fitted, grid)?;
    let file_out = ModelFile {
        model,
        response_argvals: y_table.argvals.clone(),
        response: VariableFit { source: response_path.clone(), n_basis: y_k, lambda: y_rep.lambda, edf: y_rep.edf },
        predictors: x_fits,
    };
    write_json(&a.out.join("model.json"), &file_out)?;
    let mut inputs = vec![response_path];
    inputs.extend(predictor_paths);
    write_manifest("fit", a.config.as_deref(), inputs, &a.out, None, started)?;
    println!("response K = {y_k}");
    for (i, v) in file_out.predictors.iter().enumerate() {
        println!("predictor {} K = {}", i + 1, v.n_basis);
    }
    println!("AMSE: {}", fmt_f64(in_sample));
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> CliResult<()> {
    let started = Instant::now();
    if a.grid < 2 {
        return Err(input_error("--grid must be at least 2"));
    }
    let mf: ModelFile = read_json(&a.model).map_err(|e| input_error(format!("model {}: {e}", a.model.display())))?;
    let model = &mf.model;
    if a.predictor.len() != model.n_predictors() {
        return Err(input_error(format!(
            "model has {} predictors, got {} files",
            model.n_predictors(),
            a.predictor.len()
        )));
    }
    let grid = default_lambda_grid();
    let mut xs = Vec::new();
    let mut names = Vec::new();
    for (p, block) in a.predictor.iter().zip(&model.predictors) {
        let t = read_curves(p, a.orientation)?;
        let (cs, _) = smooth_curves(&t.values, &t.argvals, &block.basis, &grid)?;
        if names.is_empty() {
            names = t.names.clone();
        }
        xs.push(cs);
    }
    let predicted = model.predict(&xs)?;
    prepare_out(&a.out)?;

    let mut inputs = vec![a.model.clone()];
    inputs.extend(a.predictor.iter().cloned());
    let argvals = match &a.truth {
        Some(path) => {
            let truth = read_curves(path, a.orientation)?;
            if truth.values.nrows() != predicted.n_curves() {
                return Err(input_error(format!(
                    "truth has {} curves, predicted {}",
                    truth.values.nrows(),
                    predicted.n_curves()
                )));
            }
            let (obs, _) = smooth_curves(&truth.values, &truth.argvals, &model.response_basis, &grid)?;
            let score = amse(&obs, &predicted, a.grid)?;
            println!("AMSE_p: {}", fmt_f64(score));
            inputs.push(path.clone());
            truth.argvals
        }
        None => mf.response_argvals.clone(),
    };
    let values = predicted.eval(&argvals)?;
    write_curves(&a.out.join("predictions.csv"), &CurveTable { argvals, names, values }, a.orientation)?;
    write_manifest("predict", None, inputs, &a.out, None, started)?;
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CliResult<()> {
    let started = Instant::now();
    let records = report::read_experiment_csv(&a.input)?;
    prepare_out(&a.out)?;
    let files = report::write_report(&records, &a.out)?;
    write_manifest("report", None, vec![a.input.clone()], &a.out, None, started)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
