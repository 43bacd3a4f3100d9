//! Command-line experiments over the `semdup` library.
//!
//! Every command writes into `--output-dir`: its CSV/JSON results, the
//! effective configuration as `config.resolved` (itself a valid `--config`
//! file) and a `run.meta` JSON file holding the only timestamp. Exit codes
//! are 0 on success, 1 on runtime or numerical failure and 2 on usage or
//! validation errors.

mod commands;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

pub const THREADS_ENV: &str = "SEMDUP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "semdup", version, about = "Nearest-neighbour collision statistics and duplicate-aware scaling fits")]
pub struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value = ".")]
    pub output_dir: PathBuf,
    /// Worker threads (falls back to SEMDUP_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: LogLevel,
    /// Flat `key = value` file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
    Trace,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
            LogLevel::Trace => log::LevelFilter::Trace,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Null-model theory against Monte-Carlo mean NN similarity.
    Null(NullArgs),
    /// Subsample ladder of NN statistics over an embedding file.
    Nnstats(NnstatsArgs),
    /// Effective cluster count of a stream against a reference corpus.
    Keff(KeffArgs),
    /// Plane- and ratio-law fits to a runs CSV.
    Fit(FitArgs),
    /// Gradient-redundancy simulations.
    Simulate(SimulateArgs),
    /// Write synthetic embedding files.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Uniform,
    Vmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Auto,
    Binary,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct NullArgs {
    /// Sphere dimension; samples live in R^(d+1).
    #[arg(long)]
    pub d: u32,
    #[arg(long, value_enum, default_value = "uniform")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
    #[arg(long, value_delimiter = ',', default_value = "1024,4096,16384")]
    pub n_grid: Vec<u64>,
    #[arg(long, default_value_t = 50)]
    pub mc_replicates: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct LshArgs {
    #[arg(long, default_value_t = 32)]
    pub lsh_tables: usize,
    #[arg(long, default_value_t = 12)]
    pub lsh_planes: usize,
    #[arg(long, default_value_t = 1)]
    pub lsh_radius: usize,
    /// Pools up to this size are searched exhaustively.
    #[arg(long, default_value_t = 200_000)]
    pub exact_cutoff: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct NnstatsArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: FormatArg,
    /// Ladder sizes; defaults to powers of two from 256 up to the row count.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub queries_cap: usize,
    /// Entry range `start:end` used for the power-law fit.
    #[arg(long)]
    pub fit_window: Option<String>,
    #[arg(long, default_value_t = 1.5)]
    pub deviation_factor: f64,
    /// Keep only the first this-many coordinates before normalising.
    #[arg(long)]
    pub matryoshka: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,0.95,0.99")]
    pub tails: Vec<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub lsh: LshArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct KeffArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: FormatArg,
    /// Mean NN similarity of an exact duplicate pair.
    #[arg(long, default_value_t = 1.0)]
    pub m_plus: f64,
    #[arg(long)]
    pub n_meas: usize,
    #[arg(long)]
    pub stream_queries_cap: Option<usize>,
    #[arg(long)]
    pub reference_queries_cap: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub lsh: LshArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineModel {
    /// Measured baseline where available, else a power law in compute.
    Auto,
    Table,
    Power,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    /// CSV with columns compute,pool_size,loss,split[,keff_hat].
    #[arg(long)]
    pub runs: PathBuf,
    /// Fit against keff_hat instead of pool_size where present.
    #[arg(long)]
    pub use_keff: bool,
    /// Points to predict, e.g. `C=1e18,K=1e5;C=1e19,K=inf`.
    #[arg(long)]
    pub predict: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    pub baseline_model: BaselineModel,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1")]
    pub rho_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "1,16,256")]
    pub k_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "16,256")]
    pub n_grid: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Within-cluster alignment for the learning-curve table.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 10_000.0)]
    pub keff: f64,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.7)]
    pub l_star: f64,
    #[arg(long, default_value_t = 5.0)]
    pub b: f64,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10,100,1000,10000,100000,1000000,10000000"
    )]
    pub curve_n_grid: Vec<u64>,
    /// Cluster count and sample size of the separability demo.
    #[arg(long, default_value_t = 32)]
    pub demo_k: usize,
    #[arg(long, default_value_t = 2000)]
    pub demo_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    Uniform,
    Vmf,
    /// Draws with replacement from `k` unique uniform vectors.
    Stream,
}

#[derive(Debug, Clone, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: GenKind,
    /// Sphere dimension; rows have d+1 coordinates.
    #[arg(long)]
    pub d: u32,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Zipf exponent of the latent weights; uniform when absent.
    #[arg(long)]
    pub zipf: Option<f64>,
    /// Output file, relative to the output directory unless absolute.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: FormatArg,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Null(_) => "null",
            Command::Nnstats(_) => "nnstats",
            Command::Keff(_) => "keff",
            Command::Fit(_) => "fit",
            Command::Simulate(_) => "simulate",
            Command::Gen(_) => "gen",
        }
    }

    fn args_json(&self) -> serde_json::Value {
        let v = match self {
            Command::Null(a) => serde_json::to_value(a),
            Command::Nnstats(a) => serde_json::to_value(a),
            Command::Keff(a) => serde_json::to_value(a),
            Command::Fit(a) => serde_json::to_value(a),
            Command::Simulate(a) => serde_json::to_value(a),
            Command::Gen(a) => serde_json::to_value(a),
        };
        v.expect("argument records serialise")
    }
}

/// A failed command: message plus exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<semdup::Error> for Failure {
    fn from(e: semdup::Error) -> Self {
        Self { code: if e.is_validation() { 2 } else { 1 }, message: e.to_string() }
    }
}

pub(crate) fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn resolve_threads(flag: Option<usize>) -> Result<usize, Failure> {
    if let Some(t) = flag {
        return Ok(t);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| Failure::usage(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}"))),
        _ => Ok(0),
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Errors are reported on stderr.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let argv = match config::merge_into_args(argv, &Cli::command()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .target(env_logger::Target::Stderr)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let threads = resolve_threads(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::runtime(format!("cannot start worker pool: {e}")))?;
    let dir = &cli.output_dir;
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))?;

    let globals = json!({
        "seed": cli.seed,
        "output-dir": cli.output_dir.display().to_string(),
        "threads": pool.current_num_threads(),
        "log-level": cli.log_level,
    });
    let name = cli.command.name();
    let mut resolved = format!("# semdup {name}\n");
    resolved.push_str(&config::resolved(&[globals, cli.command.args_json()]));
    write_output(dir, "config.resolved", &resolved)?;

    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    log::info!("running {name} with {} worker threads", pool.current_num_threads());
    let result = pool.install(|| commands::dispatch(&cli.command, cli.seed, dir));
    let meta = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": started,
        "elapsed_seconds": clock.elapsed().as_secs_f64(),
        "threads": pool.current_num_threads(),
        "exit_code": result.as_ref().map_or_else(|f| f.code, |_| 0),
    });
    write_output(dir, "run.meta", &format!("{meta:#}\n"))?;
    result
}
