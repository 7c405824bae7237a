//! `kinex`: run kinetic exchange simulations, fit their output and compare
//! it with closed-form predictions.
//!
//! Exit codes: 0 on success (including fits or comparisons that come out
//! unhealthy or failing), 1 on runtime failure, 2 on usage or config errors.

mod compare;
mod output;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use kinex::engine::{self, EngineError, SimConfig, SimResult};
use kinex::io::read_histogram_csv;
use kinex::stats::{
    fit_exponential, fit_gamma, fit_pareto_tail, FitResult, Goodness, Histogram, WindowPolicy,
};
use serde_json::Value;

use output::{Format, unix_now, write_run};

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) => Self::Usage(e.into()),
            _ => Self::Runtime(e.into()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

pub fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

#[derive(Parser)]
#[command(name = "kinex", version, about = "Kinetic exchange models of money and wealth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by `simulate` and `sweep`.
#[derive(clap::Args, Clone)]
pub struct RunArgs {
    /// JSON simulation config. Unknown keys are rejected.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, env = "KINEX_OUT_DIR", default_value = "kinex-out")]
    pub out_dir: PathBuf,
    /// Master seed, overriding the config's.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Histogram file format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Override a config key, e.g. `--set lambda_spec.delta=0.5`. The value
    /// is parsed as JSON, falling back to a plain string.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write histograms plus a manifest.
    Simulate(RunArgs),
    /// Run one simulation per value of a config key.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted config key to vary, e.g. `agents` or `lambda_spec.delta`.
        #[arg(long)]
        param: String,
        /// Comma-separated JSON values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
    /// Fit a histogram file.
    Fit {
        /// Histogram CSV (or JSON) written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: FitKind,
        /// Where to write the FitResult JSON; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tail fraction above the fit window start (pareto only).
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        /// Decades spanned by the fit window (pareto only).
        #[arg(long, default_value_t = 1.0)]
        decades: f64,
        /// Explicit fit window `LO:HI`, overriding the fraction (pareto only).
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Compare a run directory against a theoretical prediction.
    Compare {
        #[arg(long)]
        run_dir: PathBuf,
        /// One of `gibbs`, `gamma`, `gamma:<lambda>`, `pareto`, `mean-field`.
        #[arg(long)]
        theory: String,
        /// Report path; defaults to `compare-<theory>.json` in the run dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the default tolerance of every gated quantity.
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitKind {
    Pareto,
    Gamma,
    Exponential,
}

impl FitKind {
    fn name(self) -> &'static str {
        match self {
            Self::Pareto => "pareto",
            Self::Gamma => "gamma",
            Self::Exponential => "exponential",
        }
    }
}

/// Sets `path` (dot separated) inside a JSON object, creating objects on
/// the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(anyhow!("bad key `{path}`"));
    }
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| anyhow!("`{path}`: `{key}` is not inside an object"))?;
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| anyhow!("`{path}` is not inside an object"))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

pub fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()))
}

/// Reads the config file and applies `--set` and `--seed`.
pub fn load_config_value(args: &RunArgs) -> CliResult<Value> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))
        .map_err(usage)?;
    let mut value: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))
        .map_err(usage)?;
    for o in &args.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| usage(anyhow!("--set `{o}` needs KEY=VALUE")))?;
        set_path(&mut value, k.trim(), parse_value(v.trim())).map_err(usage)?;
    }
    if let Some(seed) = args.seed {
        set_path(&mut value, "seed", seed.into()).map_err(usage)?;
    }
    Ok(value)
}

pub fn config_from_value(value: Value) -> CliResult<SimConfig> {
    let config: SimConfig =
        serde_json::from_value(value).context("invalid config").map_err(usage)?;
    config.validate()?;
    Ok(config)
}

pub fn run_engine(config: &SimConfig, threads: usize) -> CliResult<SimResult> {
    let result = if threads == 0 {
        engine::run(config)?
    } else {
        engine::run_with_threads(config, threads)?
    };
    Ok(result)
}

fn cmd_simulate(args: &RunArgs) -> CliResult<()> {
    let config = config_from_value(load_config_value(args)?)?;
    let started = unix_now();
    let result = run_engine(&config, args.threads)?;
    let manifest = write_run(&args.out_dir, &result, args.format, args.threads, started).map_err(runtime)?;
    eprintln!(
        "wrote {} files to {} in {:.1}s (max conservation error {:.2e})",
        manifest.outputs.len() + 1,
        args.out_dir.display(),
        manifest.finished_unix - manifest.started_unix,
        manifest.audit.max_money_error.max(manifest.audit.max_commodity_error),
    );
    Ok(())
}

pub fn read_histogram(path: &Path) -> CliResult<Histogram> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let h = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(anyhow::Error::from)
    } else {
        read_histogram_csv(text.as_bytes()).map_err(anyhow::Error::from)
    };
    h.with_context(|| format!("parsing {}", path.display())).map_err(usage)
}

/// Runs a fit, turning an analysis error into an unhealthy result.
pub fn fit_histogram(h: &Histogram, kind: FitKind, policy: WindowPolicy) -> FitResult {
    let fit = h.estimate().and_then(|e| match kind {
        FitKind::Pareto => fit_pareto_tail(&e, policy),
        FitKind::Gamma => fit_gamma(&e),
        FitKind::Exponential => fit_exponential(&e),
    });
    fit.unwrap_or_else(|e| FitResult {
        method: kind.name().into(),
        estimates: Vec::new(),
        window: [f64::NAN, f64::NAN],
        goodness: Goodness { samples: h.total(), ..Goodness::default() },
        healthy: false,
        warnings: vec![e.to_string()],
    })
}

pub fn fit_summary(fit: &FitResult) -> String {
    let est: Vec<String> = fit
        .estimates
        .iter()
        .map(|e| format!("{} = {:.4} ± {:.4}", e.name, e.value, e.stderr))
        .collect();
    let mut line = format!(
        "{}: {} [{}]",
        fit.method,
        if est.is_empty() { "no estimate".into() } else { est.join(", ") },
        if fit.healthy { "healthy" } else { "unhealthy" }
    );
    if let Some(w) = fit.warnings.first() {
        line.push_str(&format!(" ({w})"));
    }
    line
}

fn parse_window(text: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = text.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.parse().map_err(|e| format!("{lo}: {e}"))?;
    let hi: f64 = hi.parse().map_err(|e| format!("{hi}: {e}"))?;
    Ok((lo, hi))
}

fn cmd_fit(input: &Path, kind: FitKind, out: Option<&Path>, policy: WindowPolicy) -> CliResult<()> {
    let h = read_histogram(input)?;
    let fit = fit_histogram(&h, kind, policy);
    let json = serde_json::to_string_pretty(&fit).map_err(runtime)?;
    match out {
        Some(path) => {
            fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display())).map_err(runtime)?
        }
        None => println!("{json}"),
    }
    eprintln!("{}", fit_summary(&fit));
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Sweep { run, param, values } => sweep::cmd_sweep(&run, &param, &values),
        Command::Fit { input, kind, out, fraction, decades, window } => {
            let policy = match window {
                Some((lo, hi)) => WindowPolicy::Explicit { lo, hi },
                None => WindowPolicy::TopFraction { fraction, decades },
            };
            cmd_fit(&input, kind, out.as_deref(), policy)
        }
        Command::Compare { run_dir, theory, out, tolerance } => {
            compare::cmd_compare(&run_dir, &theory, out.as_deref(), tolerance)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
