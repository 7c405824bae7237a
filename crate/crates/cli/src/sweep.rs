use std::fs;

use anyhow::{anyhow, Context};
use kinex::engine::log_log_slope;
use kinex::engine::{Model, SimConfig, SimResult};
use kinex::stats::{fit_pareto_tail_grouped, FitResult, WindowPolicy};
use serde::Serialize;
use serde_json::Value;

use crate::output::{unix_now, write_run};
use crate::{
    config_from_value, fit_histogram, load_config_value, parse_value, run_engine, runtime,
    set_path, usage, CliResult, FitKind, RunArgs,
};

/// Fit matching the model: the Gibbs temperature, the gamma shape, or the
/// tail exponent when propensities are distributed.
pub fn automatic_fit(config: &SimConfig, result: &SimResult) -> Option<(FitResult, &'static str)> {
    if config.distributed() {
        let fit = fit_pareto_tail_grouped(&result.money_by_ensemble, WindowPolicy::default())
            .unwrap_or_else(|_| fit_histogram(&result.money, FitKind::Pareto, WindowPolicy::default()));
        return Some((fit, "nu"));
    }
    match config.model {
        Model::NoSavings => Some((fit_histogram(&result.money, FitKind::Exponential, WindowPolicy::default()), "T")),
        Model::UniformSavings | Model::Angle | Model::Commodity => {
            Some((fit_histogram(&result.money, FitKind::Gamma, WindowPolicy::default()), "alpha"))
        }
        _ => None,
    }
}

#[derive(Serialize)]
struct Scaling {
    param: String,
    /// Slope of ln tau against ln(1 - lambda_max).
    tau_vs_one_minus_lambda_max: Option<f64>,
    /// Slope of ln <m(lambda_max)> against ln of the swept value.
    richest_mean_vs_value: Option<f64>,
    points: Vec<ScalingPoint>,
}

#[derive(Serialize)]
struct ScalingPoint {
    value: Value,
    one_minus_lambda_max: f64,
    richest_mean: f64,
    tau: Option<u64>,
}

fn dir_name(index: usize, param: &str, value: &Value) -> String {
    let raw = match value {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    };
    let clean: String = raw
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{index:03}_{param}={clean}")
}

fn csv_field(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

pub fn cmd_sweep(args: &RunArgs, param: &str, values: &str) -> CliResult<()> {
    let values: Vec<Value> =
        values.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse_value).collect();
    if values.is_empty() {
        return Err(usage(anyhow!("--values is empty")));
    }
    let base = load_config_value(args)?;
    let mut configs = Vec::with_capacity(values.len());
    for v in &values {
        let mut cv = base.clone();
        set_path(&mut cv, param, v.clone()).map_err(usage)?;
        let config = config_from_value(cv)
            .map_err(|f| match f {
                crate::Failure::Usage(e) => usage(e.context(format!("{param} = {v}"))),
                other => other,
            })?;
        configs.push(config);
    }
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(runtime)?;

    let mut rows = vec![
        "param,value,dir,fit_method,estimate,value_fit,stderr,healthy,richest_mean,tau,one_minus_lambda_max"
            .to_string(),
    ];
    let mut points = Vec::new();
    for (i, (value, config)) in values.iter().zip(&configs).enumerate() {
        let name = dir_name(i, param, value);
        let started = unix_now();
        let result = run_engine(config, args.threads)?;
        write_run(&args.out_dir.join(&name), &result, args.format, args.threads, started)
            .map_err(runtime)?;
        let fit = automatic_fit(config, &result);
        let (method, est_name, est, se, healthy) = match &fit {
            Some((f, n)) => (f.method.clone(), *n, f.value(n), f.stderr(n), f.healthy.to_string()),
            None => (String::new(), "", None, None, String::new()),
        };
        let richest = result.richest.as_ref().map(|r| {
            let lmax = r.lambda_max.iter().sum::<f64>() / r.lambda_max.len() as f64;
            (r.long_run_mean, r.tau, 1.0 - lmax)
        });
        if let Some((mean, tau, gap)) = richest {
            points.push(ScalingPoint { value: value.clone(), one_minus_lambda_max: gap, richest_mean: mean, tau });
        }
        let value_text = value.to_string().replace(',', ";");
        rows.push(format!(
            "{param},{value_text},{name},{method},{est_name},{},{},{healthy},{},{},{}",
            csv_field(est),
            csv_field(se),
            csv_field(richest.map(|r| r.0)),
            richest.and_then(|r| r.1).map_or(String::new(), |t| t.to_string()),
            csv_field(richest.map(|r| r.2)),
        ));
        eprintln!("{name}: {}", fit.as_ref().map_or("no fit".into(), |(f, _)| crate::fit_summary(f)));
    }
    let summary = args.out_dir.join("summary.csv");
    fs::write(&summary, rows.join("\n") + "\n")
        .with_context(|| format!("writing {}", summary.display()))
        .map_err(runtime)?;

    if !points.is_empty() {
        let timed: Vec<&ScalingPoint> = points.iter().filter(|p| p.tau.is_some_and(|t| t > 0)).collect();
        let tau_slope = log_log_slope(
            &timed.iter().map(|p| p.one_minus_lambda_max).collect::<Vec<_>>(),
            &timed.iter().map(|p| p.tau.unwrap_or(0) as f64).collect::<Vec<_>>(),
        );
        let numeric: Vec<&ScalingPoint> = points.iter().filter(|p| p.value.as_f64().is_some()).collect();
        let mean_slope = log_log_slope(
            &numeric.iter().filter_map(|p| p.value.as_f64()).collect::<Vec<_>>(),
            &numeric.iter().map(|p| p.richest_mean).collect::<Vec<_>>(),
        );
        let scaling = Scaling {
            param: param.into(),
            tau_vs_one_minus_lambda_max: tau_slope,
            richest_mean_vs_value: mean_slope,
            points,
        };
        let path = args.out_dir.join("scaling.json");
        fs::write(&path, serde_json::to_vec_pretty(&scaling).map_err(runtime)?)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
    }
    Ok(())
}
