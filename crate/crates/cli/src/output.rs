use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use kinex::engine::{ConservationAudit, SimConfig, SimResult};
use kinex::io::histogram_to_csv_string;
use kinex::stats::Histogram;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to reproduce a run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub tool: String,
    pub version: String,
    pub config: SimConfig,
    pub seed: u64,
    pub threads: usize,
    pub format: Format,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub audit: ConservationAudit,
    pub burn_in_steps: Vec<u64>,
    pub outputs: Vec<OutputFile>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn histogram_file(stem: &str, h: &Histogram, format: Format) -> Result<(String, Vec<u8>)> {
    Ok(match format {
        Format::Csv => (format!("{stem}.csv"), histogram_to_csv_string(h).into_bytes()),
        Format::Json => (format!("{stem}.json"), serde_json::to_vec_pretty(h)?),
    })
}

fn csv(header: &str, rows: impl Iterator<Item = String>) -> Vec<u8> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s.into_bytes()
}

/// File name and contents of every output of a run.
pub fn render(result: &SimResult, format: Format) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = vec![histogram_file("money", &result.money, format)?];
    for (stem, h) in [
        ("commodity", &result.commodity),
        ("wealth", &result.wealth),
        ("difference", &result.difference),
    ] {
        if let Some(h) = h {
            files.push(histogram_file(stem, h, format)?);
        }
    }
    if let Some(bins) = &result.conditional {
        let rows = bins.iter().flatten().map(|b| {
            format!(
                "{},{},{},{},{},{},{}",
                b.lambda_lo, b.lambda_hi, b.count, b.mean_lambda, b.mean_money, b.most_probable,
                b.product
            )
        });
        files.push((
            "conditional.csv".into(),
            csv(
                "lambda_lo,lambda_hi,count,mean_lambda,mean_money,most_probable,product",
                rows,
            ),
        ));
    }
    if let Some(trace) = &result.richest {
        let rows = trace.series.iter().enumerate().map(|(t, m)| format!("{t},{m}"));
        files.push(("richest.csv".into(), csv("step,mean_money", rows)));
        files.push(("richest_summary.json".into(), serde_json::to_vec_pretty(&serde_json::json!({
            "lambda_max": trace.lambda_max,
            "long_run_mean": trace.long_run_mean,
            "tau": trace.tau,
        }))?));
    }
    if let Some(agents) = &result.agents {
        let rows = agents
            .iter()
            .map(|a| format!("{},{},{},{}", a.ensemble, a.agent, a.lambda, a.mean_money));
        files.push(("agents.csv".into(), csv("ensemble,agent,lambda,mean_money", rows)));
    }
    if let Some(snapshots) = &result.final_snapshots {
        files.push(("final_snapshots.json".into(), serde_json::to_vec(snapshots)?));
    }
    let summaries = serde_json::to_vec_pretty(&result.ensembles)?;
    files.push(("ensembles.json".into(), summaries));
    Ok(files)
}

/// Writes the outputs, the config echo and the manifest into `dir`.
pub fn write_run(
    dir: &Path,
    result: &SimResult,
    format: Format,
    threads: usize,
    started_unix: f64,
) -> Result<ExperimentManifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = render(result, format)?;
    files.push((CONFIG_ECHO.into(), serde_json::to_vec_pretty(&result.config)?));
    let mut outputs = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = dir.join(&name);
        fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        outputs.push(OutputFile {
            name,
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = ExperimentManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: result.config.clone(),
        seed: result.config.seed,
        threads,
        format,
        started_unix,
        finished_unix: unix_now(),
        audit: result.audit,
        burn_in_steps: result.ensembles.iter().map(|e| e.burn_in_steps).collect(),
        outputs,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<ExperimentManifest> {
    let path: PathBuf = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}
