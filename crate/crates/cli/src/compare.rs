use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use kinex::engine::Model;
use kinex::lambda::LambdaDistSpec;
use kinex::stats::WindowPolicy;
use kinex::theory::{gamma_params, gibbs_temperature, predicted_tail_exponent, TailPrediction};
use serde::{Deserialize, Serialize};

use crate::output::{read_manifest, ExperimentManifest, Format};
use crate::{fit_histogram, read_histogram, runtime, usage, CliResult, FitKind};

/// Relative tolerance on the Gibbs temperature.
pub const GIBBS_TOLERANCE: f64 = 0.05;
/// Relative tolerance on the gamma shape.
pub const GAMMA_TOLERANCE: f64 = 0.10;
/// Absolute tolerance on the tail exponent.
pub const PARETO_TOLERANCE: f64 = 0.10;
/// Relative spread allowed in `<m>(1 - lambda)` across propensity bins.
pub const MEAN_FIELD_TOLERANCE: f64 = 0.10;
/// Propensity bins above this are left out of the mean-field check.
pub const MEAN_FIELD_LAMBDA_CUTOFF: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub enum Theory {
    Gibbs,
    Gamma(Option<f64>),
    Pareto,
    MeanField,
}

impl Theory {
    pub fn parse(text: &str) -> Result<Self, anyhow::Error> {
        match text.split_once(':') {
            None => match text {
                "gibbs" => Ok(Self::Gibbs),
                "gamma" => Ok(Self::Gamma(None)),
                "pareto" => Ok(Self::Pareto),
                "mean-field" | "mean_field" => Ok(Self::MeanField),
                _ => Err(anyhow!("unknown theory `{text}`")),
            },
            Some(("gamma", l)) => {
                let l: f64 = l.parse().with_context(|| format!("lambda in `{text}`"))?;
                Ok(Self::Gamma(Some(l)))
            }
            _ => Err(anyhow!("unknown theory `{text}`")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub simulated: f64,
    pub stderr: Option<f64>,
    pub predicted: f64,
    pub tolerance: f64,
    /// `relative` or `absolute`.
    pub tolerance_kind: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub theory: String,
    pub model: Model,
    pub comparisons: Vec<Comparison>,
    pub notes: Vec<String>,
    pub pass: bool,
}

fn relative(quantity: &str, simulated: f64, stderr: Option<f64>, predicted: f64, tol: f64) -> Comparison {
    Comparison {
        quantity: quantity.into(),
        simulated,
        stderr,
        predicted,
        tolerance: tol,
        tolerance_kind: "relative".into(),
        pass: ((simulated - predicted) / predicted).abs() <= tol,
    }
}

fn absolute(quantity: &str, simulated: f64, stderr: Option<f64>, predicted: f64, tol: f64) -> Comparison {
    Comparison {
        quantity: quantity.into(),
        simulated,
        stderr,
        predicted,
        tolerance: tol,
        tolerance_kind: "absolute".into(),
        pass: (simulated - predicted).abs() <= tol,
    }
}

fn money_file(manifest: &ExperimentManifest) -> &'static str {
    match manifest.format {
        Format::Csv => "money.csv",
        Format::Json => "money.json",
    }
}

fn pairing(theory: &str, model: Model) -> crate::Failure {
    usage(anyhow!("theory `{theory}` does not apply to a {model:?} run"))
}

/// Rows of `conditional.csv` as `(lambda_hi, product)`.
fn read_conditional(path: &Path) -> CliResult<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {} (run with lambda_bins set)", path.display()))
        .map_err(usage)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<f64> = line
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("{} line {}", path.display(), i + 1))
            .map_err(usage)?;
        if f.len() != 7 {
            return Err(usage(anyhow!("{} line {}: expected 7 fields", path.display(), i + 1)));
        }
        rows.push((f[1], f[6]));
    }
    Ok(rows)
}

pub fn compare(run_dir: &Path, theory_text: &str, tolerance: Option<f64>) -> CliResult<CompareReport> {
    let theory = Theory::parse(theory_text).map_err(usage)?;
    let manifest = read_manifest(run_dir).map_err(usage)?;
    let config = &manifest.config;
    let mut notes = Vec::new();
    let mut comparisons = Vec::new();
    let money = || read_histogram(&run_dir.join(money_file(&manifest)));
    match theory {
        Theory::Gibbs => {
            let zero_savings = matches!(
                (&config.model, &config.lambda_spec),
                (Model::UniformSavings, Some(LambdaDistSpec::Fixed { value })) if *value == 0.0
            );
            if config.model != Model::NoSavings && !zero_savings {
                return Err(pairing(theory_text, config.model));
            }
            let t = gibbs_temperature(config.total_money(), config.agents).map_err(runtime)?;
            let fit = fit_histogram(&money()?, FitKind::Exponential, WindowPolicy::default());
            let sim = fit.value("T").ok_or_else(|| runtime(anyhow!("exponential fit failed: {:?}", fit.warnings)))?;
            comparisons.push(relative("T", sim, fit.stderr("T"), t, tolerance.unwrap_or(GIBBS_TOLERANCE)));
            if let (Some(ks), Some(crit)) = (fit.goodness.ks_statistic, fit.goodness.ks_critical) {
                comparisons.push(Comparison {
                    quantity: "ks_statistic".into(),
                    simulated: ks,
                    stderr: None,
                    predicted: 0.0,
                    tolerance: crit,
                    tolerance_kind: "absolute".into(),
                    pass: ks < crit,
                });
            }
        }
        Theory::Gamma(requested) => {
            let configured = match (&config.model, &config.lambda_spec) {
                (Model::UniformSavings, Some(LambdaDistSpec::Fixed { value })) => *value,
                (Model::NoSavings, None) => 0.0,
                _ => return Err(pairing(theory_text, config.model)),
            };
            if let Some(l) = requested {
                if (l - configured).abs() > 1e-12 {
                    return Err(usage(anyhow!(
                        "theory lambda {l} differs from the run's lambda {configured}"
                    )));
                }
            }
            let p = gamma_params(configured).map_err(usage)?;
            let fit = fit_histogram(&money()?, FitKind::Gamma, WindowPolicy::default());
            let tol = tolerance.unwrap_or(GAMMA_TOLERANCE);
            let (Some(alpha), Some(t)) = (fit.value("alpha"), fit.value("T")) else {
                return Err(runtime(anyhow!("gamma fit failed: {:?}", fit.warnings)));
            };
            // alpha = 0 makes a relative tolerance meaningless; compare the
            // shape alpha + 1 instead.
            comparisons.push(relative("alpha_plus_one", alpha + 1.0, fit.stderr("alpha"), p.alpha + 1.0, tol));
            comparisons.push(relative("T", t * config.money_per_agent.recip(), fit.stderr("T"), p.temperature, tol));
        }
        Theory::Pareto => {
            let spec = match (&config.model, &config.lambda_spec) {
                (_, Some(spec)) if config.distributed() => spec,
                _ => return Err(pairing(theory_text, config.model)),
            };
            let nu = match predicted_tail_exponent(spec).map_err(usage)? {
                TailPrediction::PowerLaw(nu) => nu,
                TailPrediction::NoPowerLaw => {
                    return Err(usage(anyhow!("the run's propensity law predicts no power-law tail")))
                }
            };
            let fit = fit_histogram(&money()?, FitKind::Pareto, WindowPolicy::default());
            let tol = tolerance.unwrap_or(PARETO_TOLERANCE);
            match fit.value("nu") {
                Some(sim) => {
                    let mut row = absolute("nu", sim, fit.stderr("nu"), nu, tol);
                    row.pass &= fit.healthy;
                    comparisons.push(row);
                    if let Some(ls) = fit.value("nu_least_squares") {
                        comparisons.push(absolute("nu_least_squares", ls, fit.stderr("nu_least_squares"), nu, tol));
                    }
                }
                None => comparisons.push(Comparison {
                    quantity: "nu".into(),
                    simulated: f64::NAN,
                    stderr: None,
                    predicted: nu,
                    tolerance: tol,
                    tolerance_kind: "absolute".into(),
                    pass: false,
                }),
            }
            notes.extend(fit.warnings);
        }
        Theory::MeanField => {
            if !config.distributed() || config.annealed() {
                return Err(pairing(theory_text, config.model));
            }
            let rows = read_conditional(&run_dir.join("conditional.csv"))?;
            let used: Vec<f64> = rows
                .iter()
                .filter(|(hi, _)| *hi <= MEAN_FIELD_LAMBDA_CUTOFF + 1e-12)
                .map(|r| r.1)
                .collect();
            if used.is_empty() {
                return Err(usage(anyhow!("no propensity bins at or below {MEAN_FIELD_LAMBDA_CUTOFF}")));
            }
            let c = used.iter().sum::<f64>() / used.len() as f64;
            let tol = tolerance.unwrap_or(MEAN_FIELD_TOLERANCE);
            for (hi, product) in rows.iter().filter(|(hi, _)| *hi <= MEAN_FIELD_LAMBDA_CUTOFF + 1e-12) {
                comparisons.push(relative(&format!("product_lambda_below_{hi}"), *product, None, c, tol));
            }
            notes.push(format!("prediction is the mean product over {} bins", used.len()));
        }
    }
    let pass = !comparisons.is_empty() && comparisons.iter().all(|c| c.pass);
    Ok(CompareReport { theory: theory_text.into(), model: config.model, comparisons, notes, pass })
}

pub fn cmd_compare(run_dir: &Path, theory: &str, out: Option<&Path>, tolerance: Option<f64>) -> CliResult<()> {
    let report = compare(run_dir, theory, tolerance)?;
    let default = run_dir.join(format!("compare-{}.json", theory.replace(':', "_")));
    let path = out.unwrap_or(&default);
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display())).map_err(runtime)?;
    for c in &report.comparisons {
        eprintln!(
            "{}: simulated {:.4} predicted {:.4} ({} tolerance {}) {}",
            c.quantity,
            c.simulated,
            c.predicted,
            c.tolerance_kind,
            c.tolerance,
            if c.pass { "pass" } else { "FAIL" }
        );
    }
    eprintln!("{}: {}", report.theory, if report.pass { "pass" } else { "FAIL" });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_theories() {
        assert_eq!(Theory::parse("gibbs").unwrap(), Theory::Gibbs);
        assert_eq!(Theory::parse("gamma:0.5").unwrap(), Theory::Gamma(Some(0.5)));
        assert_eq!(Theory::parse("mean-field").unwrap(), Theory::MeanField);
        assert!(Theory::parse("gamma:x").is_err());
        assert!(Theory::parse("boltzmann").is_err());
    }
}
