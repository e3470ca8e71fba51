//! `hdica` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use hdica::experiment::{self, Preset};
use hdica::fastica::FastIcaConfig;
use hdica::inference::{align, confidence_intervals, losses, plugin_moments, SourceMoments};
use hdica::init::{InitKind, InitMethod};
use hdica::io::{self, FitRecord};
use hdica::pipeline::{run_pipeline, PipelineConfig};
use hdica::simulate::{generate, Mixing, Scenario, SourceFamily};
use hdica::tensorops::DataMatrix;
use hdica::whiten::{WhitenMode, WhitenPlan};

#[derive(Parser)]
#[command(name = "hdica", version, about = "High-dimensional independent component analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: data, mixing and sources CSV files.
    Simulate(SimulateArgs),
    /// Estimate the mixing matrix of a numeric CSV.
    Fit(FitArgs),
    /// Compare an estimate with the true mixing matrix.
    Eval(EvalArgs),
    /// Confidence intervals for linear, entry and bilinear contrasts.
    Infer(InferArgs),
    /// Run a Monte-Carlo preset and write raw and summary CSV files.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// laplace, uniform, rademacher, gauss_rademacher:<alpha> or student_t:<df>
    #[arg(long, default_value = "laplace")]
    dist: String,
    /// identity, haar, conditioned:<condition number> or explicit:<csv file>
    #[arg(long, default_value = "haar")]
    mixing: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory receiving data.csv, mixing.csv and sources.csv.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write a header line of column names.
    #[arg(long)]
    header: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// The first line of the input holds column names.
    #[arg(long)]
    header: bool,
    #[arg(long, default_value = "projection", value_parser = parse_init)]
    init: InitKind,
    /// Number of random slices (default min(d², 400)).
    #[arg(long = "L")]
    slices: Option<usize>,
    /// Fixed-point iteration cap (default max(20, ⌈4 ln d⌉)).
    #[arg(long = "T")]
    max_iter: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    conv_tol: f64,
    /// Number of components to extract (default all).
    #[arg(long)]
    components: Option<usize>,
    /// split, known:<covariance csv>, none or in-sample
    #[arg(long, default_value = "split")]
    prewhiten: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result JSON path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Fit-result JSON or a d×k CSV of columns.
    #[arg(long)]
    estimate: PathBuf,
    /// d×d CSV of the true mixing matrix.
    #[arg(long)]
    truth: PathBuf,
    /// json or csv
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Args)]
struct InferArgs {
    /// Fit-result JSON.
    #[arg(long)]
    result: PathBuf,
    /// The data the result was fitted on; needed for plugin moments.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    header: bool,
    /// One contrast per line: `entry i j`, `linear j u…` or `bilinear u… v…`
    /// with 1-based indices.
    #[arg(long)]
    contrasts: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// analytic:<family> or plugin
    #[arg(long, default_value = "plugin")]
    moments: String,
    /// Sample size for the intervals (default: rows used in the fit).
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// method_comparison, clt_histograms, init_comparison_grid, dim_sweep,
    /// n_sweep or kurtosis_breakdown
    preset: String,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    #[arg(long, env = "HDICA_THREADS")]
    threads: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full-scale grid instead of the desk-scale default.
    #[arg(long)]
    full: bool,
    /// Replace the preset's dimensions (comma separated).
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    /// Replace the preset's sample sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
}

fn parse_init(s: &str) -> Result<InitKind, String> {
    s.parse().map_err(|e: hdica::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Lib(hdica::Error),
}

impl From<hdica::Error> for Failure {
    fn from(e: hdica::Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn read_data(path: &Path, header: bool) -> CliResult<DataMatrix> {
    Ok(DataMatrix::new(io::read_matrix(path, header)?)?)
}

fn parse_mixing(spec: &str, d: usize) -> CliResult<Mixing> {
    let (kind, arg) = spec.split_once(':').map_or((spec, None), |(k, a)| (k, Some(a)));
    match (kind, arg) {
        ("identity", None) => Ok(Mixing::Identity),
        ("haar", None) => Ok(Mixing::HaarOrthogonal),
        ("conditioned", Some(c)) => match c.parse::<f64>() {
            Ok(condition) if condition >= 1.0 => Ok(Mixing::Conditioned { condition }),
            _ => usage(format!("condition number must be a number ≥ 1, got {c:?}")),
        },
        ("explicit", Some(file)) => {
            let m = io::read_matrix(Path::new(file), false)?;
            if m.shape() != (d, d) {
                return Err(hdica::Error::DimensionMismatch { expected: d, got: m.nrows() }.into());
            }
            Ok(Mixing::Explicit { matrix: io::to_rows(&m) })
        }
        _ => usage(format!("unknown mixing {spec:?}; expected identity, haar, conditioned:<c> or explicit:<file>")),
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    if a.d == 0 || a.n == 0 {
        return usage("--d and --n must be positive");
    }
    let family: SourceFamily = a.dist.parse().map_err(|e: hdica::Error| Failure::Usage(e.to_string()))?;
    let scn = Scenario::new(a.d, a.n, family, parse_mixing(&a.mixing, a.d)?, a.seed);
    let ds = generate(&scn)?;
    fs::create_dir_all(&a.out_dir)?;
    let names = |p: &str| a.header.then(|| io::column_names(p, a.d));
    io::write_matrix_file(&a.out_dir.join("data.csv"), ds.data.values(), names("x").as_deref())?;
    io::write_matrix_file(&a.out_dir.join("mixing.csv"), &ds.mixing, names("a").as_deref())?;
    io::write_matrix_file(&a.out_dir.join("sources.csv"), &ds.sources, names("s").as_deref())?;
    println!("{}", serde_json::to_string_pretty(&scn)?);
    Ok(())
}

fn parse_prewhiten(spec: &str, d: usize) -> CliResult<WhitenMode> {
    match spec.split_once(':') {
        Some(("known", file)) => {
            let sigma = io::read_matrix(Path::new(file), false)?;
            if sigma.shape() != (d, d) {
                return Err(hdica::Error::DimensionMismatch { expected: d, got: sigma.nrows() }.into());
            }
            Ok(WhitenMode::Known(sigma))
        }
        None if spec == "split" => Ok(WhitenMode::Split),
        None if spec == "none" => Ok(WhitenMode::None),
        None if spec == "in-sample" => Ok(WhitenMode::InSample),
        _ => usage(format!("unknown --prewhiten {spec:?}; expected split, known:<file>, none or in-sample")),
    }
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    if !(a.conv_tol >= 0.0) {
        return usage("--conv-tol must be non-negative");
    }
    if a.slices == Some(0) {
        return usage("--L must be at least 1");
    }
    let data = read_data(&a.input, a.header)?;
    let mode = parse_prewhiten(&a.prewhiten, data.d())?;
    let fastica = FastIcaConfig {
        max_iter: a.max_iter,
        conv_tol: a.conv_tol,
        init: InitMethod { kind: a.init, slices: a.slices },
        seed: a.seed,
        components: a.components,
        ..Default::default()
    };
    let cfg = PipelineConfig { whiten: WhitenPlan::new(mode), fastica };
    let out = run_pipeline(&data, &cfg)?;
    let record = FitRecord::new(&out, data.n(), &fastica, &a.prewhiten, Some(a.input.display().to_string()));
    if record.diagnostics.coherence_flag {
        eprintln!("warning: estimated directions are not near-orthogonal (max |<a_i, a_j>| = {:.3})", record.diagnostics.max_coherence);
    }
    if record.diagnostics.components.iter().any(|c| c.spurious) {
        eprintln!("warning: some components have near-zero estimated kurtosis");
    }
    let text = serde_json::to_string_pretty(&record)? + "\n";
    match a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    if a.format != "json" && a.format != "csv" {
        return usage(format!("unknown --format {:?}; expected json or csv", a.format));
    }
    let est = io::read_estimate(&a.estimate)?;
    let truth = io::read_matrix(&a.truth, false)?;
    let report = losses(&est, &truth)?;
    if a.format == "csv" {
        println!("ell_m,ell_a");
        println!("{},{}", io::format_f64(report.ell_m), io::format_f64(report.ell_a));
        return Ok(());
    }
    let alignment = if est.shape() == truth.shape() { Some(align(&est, &truth)?) } else { None };
    let doc = serde_json::json!({
        "schema": io::SCHEMA_VERSION,
        "ell_m": report.ell_m,
        "ell_a": report.ell_a,
        "assignment_m": report.assignment_m,
        "assignment_a": report.assignment_a,
        "alignment": alignment.map(|al| serde_json::json!({
            "permutation": al.permutation,
            "signs": al.signs,
            "aligned_a_hat": io::to_rows(&al.aligned_a_hat),
        })),
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

/// Rows of `data` that fed the fit, in the fit's whitened coordinates.
fn whitened_fit_rows(record: &FitRecord, data: &DataMatrix) -> CliResult<DataMatrix> {
    if data.n() != record.n || data.d() != record.d {
        return Err(hdica::Error::InvalidInput(format!(
            "data is {}x{} but the result was fitted on {}x{}",
            data.n(),
            data.d(),
            record.n,
            record.d
        ))
        .into());
    }
    let w = &record.whitening;
    let inv_half = io::from_rows(&w.sigma_inv_half)?;
    let [start, end] = w.fitting_rows;
    let mut x = data.values().rows(start, end - start).into_owned();
    if let Some(mean) = &w.mean {
        let mean = DVector::from_column_slice(mean);
        for mut row in x.row_iter_mut() {
            row -= mean.transpose();
        }
    }
    Ok(DataMatrix::new(x * inv_half)?)
}

fn cmd_infer(a: InferArgs) -> CliResult<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return usage(format!("--level must lie in (0, 1), got {}", a.level));
    }
    if a.n == Some(0) {
        return usage("--n must be positive");
    }
    let record = FitRecord::from_json(&fs::read_to_string(&a.result)?)?;
    let a_hat: DMatrix<f64> = record.a_hat_whitened()?;
    let d = record.d;
    let moments: Vec<SourceMoments> = match a.moments.split_once(':') {
        Some(("analytic", fam)) => {
            let family: SourceFamily = fam.parse().map_err(|e: hdica::Error| Failure::Usage(e.to_string()))?;
            vec![family.moments(); a_hat.ncols()]
        }
        None if a.moments == "plugin" => {
            let Some(path) = &a.data else {
                return usage("--moments plugin needs --data");
            };
            let data = read_data(path, a.header)?;
            plugin_moments(&whitened_fit_rows(&record, &data)?, &a_hat)?
        }
        _ => return usage(format!("unknown --moments {:?}; expected analytic:<family> or plugin", a.moments)),
    };
    let contrasts = io::parse_contrasts(&fs::read_to_string(&a.contrasts)?, d)?;
    let n = a.n.unwrap_or(record.n_fit);
    let report = confidence_intervals(&a_hat, &moments, n, &contrasts, a.level)?;
    let mut doc = serde_json::to_value(&report)?;
    doc["schema"] = io::SCHEMA_VERSION.into();
    doc["coordinates"] = "whitened".into();
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> CliResult<()> {
    let preset: Preset = a.preset.parse().map_err(|e: hdica::Error| Failure::Usage(e.to_string()))?;
    if a.reps == Some(0) {
        return usage("--reps must be at least 1");
    }
    if a.threads == Some(0) {
        return usage("--threads must be at least 1");
    }
    let threads = a.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from));
    let spec = preset.spec(a.full, a.d.as_deref(), a.n.as_deref(), a.reps, a.seed);
    let records = experiment::run(&spec, threads)?;
    experiment::write_suite(&a.out_dir, &spec, &records)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "{}: {} records ({} failed) written to {}",
        spec.name,
        records.len(),
        failed,
        a.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Experiment(a) => cmd_experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
