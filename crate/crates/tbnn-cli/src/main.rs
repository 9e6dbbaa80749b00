//! Experiment CLI: train/evaluate protocols, initialization sweeps, timing
//! benchmarks, and the Monte Carlo oracle checks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure,
//! 4 oracle failure.

mod experiment;
mod report;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use experiment::{run_bench, run_sweep, run_train_eval, SweepAxis, TrainEvalSpec};
use report::{OracleRunReport, SCHEMA_VERSION};
use tbnn::data::NormalizeMode;

#[derive(Parser)]
#[command(
    name = "tbnn",
    version,
    about = "Student's-t Bayesian neural networks: gradient-free online training and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train on a split of the dataset for one online epoch and evaluate;
    /// repeated over independent runs, with median/std aggregation.
    TrainEval(TrainEvalArgs),
    /// Repeat train-eval over a grid of scale0, nu0 or depth values.
    Sweep(SweepArgs),
    /// Per-sample training time across hidden widths, with the scaling ratio.
    Bench(BenchArgs),
    /// Validate the analytic moment formulas against sampling oracles.
    Oracle(OracleArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file (comma-separated, '.' decimals, no quoting). Without this
    /// flag a built-in synthetic linear dataset (500 rows, y = 2x + noise)
    /// is used.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Zero-based target column; defaults to the last column.
    #[arg(long)]
    target_col: Option<usize>,
    /// Skip one header line.
    #[arg(long, default_value_t = false)]
    has_header: bool,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Hidden layer widths, comma separated.
    #[arg(long, default_value = "50", value_delimiter = ',')]
    hidden: Vec<usize>,
    /// Initial degrees of freedom.
    #[arg(long, default_value_t = 12.0)]
    nu0: f64,
    /// Initial squared scale on every weight.
    #[arg(long, default_value_t = 0.01)]
    scale0: f64,
    /// Aleatoric output-noise variance.
    #[arg(long, default_value_t = 1.0)]
    noise_var: f64,
}

#[derive(Args)]
struct TrainEvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Independent runs (fresh split, init and training order each).
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Feature normalization fitted on the train split.
    #[arg(long, value_enum, default_value_t = NormalizeChoice::None)]
    normalize: NormalizeChoice,
    /// Also evaluate the three OOD scenarios (x0.1, x2, +3 sigma).
    #[arg(long, default_value_t = false)]
    ood: bool,
    /// Which split's per-feature deviation drives the +3 sigma scenario.
    #[arg(long, value_enum, default_value_t = OodStdSource::Test)]
    ood_std: OodStdSource,
    /// Fraction of rows used for training.
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    /// Report file (JSON).
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Swept parameter. For depth, --hidden's first entry is the layer width.
    #[arg(long, value_enum)]
    axis: AxisChoice,
    /// Grid values, comma separated.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = NormalizeChoice::None)]
    normalize: NormalizeChoice,
    #[arg(long, default_value_t = 0.9)]
    train_frac: f64,
    #[arg(long, default_value = "sweep-report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Hidden widths to time, comma separated (at least two).
    #[arg(long, value_delimiter = ',')]
    widths: Vec<usize>,
    /// Timed samples per width (median reported).
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 6)]
    input_dim: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "bench-report.json")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// Samples per ReLU grid point.
    #[arg(long, default_value_t = 1_000_000)]
    relu_samples: usize,
    /// Samples per posterior configuration.
    #[arg(long, default_value_t = 400_000)]
    posterior_samples: usize,
    /// Number of randomized posterior configurations.
    #[arg(long, default_value_t = 25)]
    posterior_configs: usize,
    /// Samples per linear-map spec.
    #[arg(long, default_value_t = 400_000)]
    linear_samples: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Test hook: shift every analytic value by this relative amount to
    /// prove the harness can fail.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    /// Optional JSON report of all checks.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormalizeChoice {
    None,
    Zscore,
}

impl From<NormalizeChoice> for NormalizeMode {
    fn from(c: NormalizeChoice) -> Self {
        match c {
            NormalizeChoice::None => NormalizeMode::None,
            NormalizeChoice::Zscore => NormalizeMode::Zscore,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OodStdSource {
    Test,
    Train,
}

impl OodStdSource {
    pub fn label(&self) -> &'static str {
        match self {
            OodStdSource::Test => "test",
            OodStdSource::Train => "train",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AxisChoice {
    Scale0,
    Nu0,
    Depth,
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
    Oracle(usize),
}

impl Failure {
    fn exit(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
            Failure::Oracle(_) => 4,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Usage(m) => format!("usage error: {m}"),
            Failure::Data(m) => format!("data error: {m}"),
            Failure::Numeric(m) => format!("numeric failure: {m}"),
            Failure::Oracle(n) => format!("oracle failure: {n} check(s) outside tolerance"),
        }
    }
}

fn classify(e: tbnn::Error) -> Failure {
    match e {
        tbnn::Error::Csv { .. } | tbnn::Error::CsvFile(_) | tbnn::Error::Io(_) => {
            Failure::Data(e.to_string())
        }
        tbnn::Error::Config(_) => Failure::Usage(e.to_string()),
        _ => Failure::Numeric(e.to_string()),
    }
}

fn load_data(args: &DataArgs, seed: u64) -> Result<(String, tbnn::data::Dataset, f64), Failure> {
    let t0 = Instant::now();
    match &args.data {
        Some(path) => {
            let ds = tbnn::data::load_csv(path, args.has_header, args.target_col)
                .map_err(classify)?;
            Ok((
                path.display().to_string(),
                ds,
                t0.elapsed().as_secs_f64(),
            ))
        }
        None => Ok((
            "synthetic-linear(n=500, sd=0.1)".to_string(),
            tbnn::data::synthetic_linear(500, 0.1, seed),
            t0.elapsed().as_secs_f64(),
        )),
    }
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::Numeric(format!("report serialization: {e}")))?;
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("writing {}: {e}", path.display())))
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes (e.g. `tbnn oracle | head`)
    // instead of panicking on the failed print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.exit())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::TrainEval(args) => {
            if args.runs == 0 {
                return Err(Failure::Usage("--runs must be at least 1".into()));
            }
            let (label, dataset, load_s) = load_data(&args.data, args.seed)?;
            let spec = TrainEvalSpec {
                data_label: label,
                dataset,
                target_col: args.data.target_col,
                has_header: args.data.has_header,
                hidden: args.model.hidden.clone(),
                nu0: args.model.nu0,
                scale0: args.model.scale0,
                noise_var: args.model.noise_var,
                runs: args.runs,
                seed: args.seed,
                normalize: args.normalize.into(),
                ood: args.ood,
                ood_std: args.ood_std,
                train_frac: args.train_frac,
                load_s,
            };
            let report = run_train_eval(&spec)?;
            experiment::print_train_eval_summary(&report);
            write_json(&args.out, &report)?;
            println!("report written to {}", args.out.display());
            Ok(())
        }
        Cmd::Sweep(args) => {
            if args.values.is_empty() {
                return Err(Failure::Usage("--values must not be empty".into()));
            }
            let (label, dataset, load_s) = load_data(&args.data, args.seed)?;
            let base = TrainEvalSpec {
                data_label: label,
                dataset,
                target_col: args.data.target_col,
                has_header: args.data.has_header,
                hidden: args.model.hidden.clone(),
                nu0: args.model.nu0,
                scale0: args.model.scale0,
                noise_var: args.model.noise_var,
                runs: args.runs,
                seed: args.seed,
                normalize: args.normalize.into(),
                ood: false,
                ood_std: OodStdSource::Test,
                train_frac: args.train_frac,
                load_s,
            };
            let axis = match args.axis {
                AxisChoice::Scale0 => SweepAxis::Scale0,
                AxisChoice::Nu0 => SweepAxis::Nu0,
                AxisChoice::Depth => SweepAxis::Depth,
            };
            println!("sweep over {}:", match axis {
                SweepAxis::Scale0 => "scale0",
                SweepAxis::Nu0 => "nu0",
                SweepAxis::Depth => "depth",
            });
            let report = run_sweep(&base, &axis, &args.values)?;
            write_json(&args.out, &report)?;
            println!("report written to {}", args.out.display());
            Ok(())
        }
        Cmd::Bench(args) => {
            let report = run_bench(args.input_dim, &args.widths, args.samples, args.seed)?;
            println!(
                "bench: input_dim {} | {} timed samples per width",
                report.input_dim, report.samples
            );
            for (w, us) in report.widths.iter().zip(&report.median_per_sample_us) {
                println!("  width {w:>5}: median {us:.1} us/sample");
            }
            println!(
                "  ratio (width {} / width {}): {:.3}",
                report.widths.last().unwrap(),
                report.widths.first().unwrap(),
                report.ratio
            );
            println!(
                "  timings: data generation {:.3} s (excluded from per-sample medians), training {:.3} s",
                report.timings.load_s, report.timings.train_eval_s
            );
            write_json(&args.out, &report)?;
            println!("report written to {}", args.out.display());
            Ok(())
        }
        Cmd::Oracle(args) => {
            let mut checks = Vec::new();
            checks.extend(
                tbnn::oracle::run_relu_grid(args.relu_samples, args.seed, args.perturb)
                    .map_err(classify)?,
            );
            checks.extend(
                tbnn::oracle::run_posterior_checks(
                    args.posterior_configs,
                    args.posterior_samples,
                    args.seed,
                    args.perturb,
                )
                .map_err(classify)?,
            );
            checks.extend(
                tbnn::oracle::run_linear_checks(args.linear_samples, args.seed, args.perturb)
                    .map_err(classify)?,
            );
            let failures = checks.iter().filter(|c| !c.pass).count();
            for c in &checks {
                println!("{}", c.line());
            }
            println!(
                "oracle: {} checks, {} failures",
                checks.len(),
                failures
            );
            if let Some(out) = &args.out {
                let report = OracleRunReport {
                    schema_version: SCHEMA_VERSION,
                    tool_version: report::tool_version(),
                    command: "oracle",
                    checks,
                    failures,
                };
                write_json(out, &report)?;
                println!("report written to {}", out.display());
            }
            if failures > 0 {
                return Err(Failure::Oracle(failures));
            }
            Ok(())
        }
    }
}
