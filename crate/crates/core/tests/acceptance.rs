//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
//! fails. `KINEX_ACCEPTANCE=1,3,11` runs a subset.

use std::process::ExitCode;
use std::time::Instant;

use kinex::engine::*;
use kinex::lambda::LambdaDistSpec;
use kinex::numeric::integrate;
use kinex::stats::*;
use kinex::theory::*;

struct Suite {
    selected: Option<Vec<u32>>,
    results: Vec<(u32, bool)>,
    /// (criterion, label, money error, commodity error) for every run.
    audits: Vec<(u32, String, f64, f64)>,
}

impl Suite {
    fn wants(&self, id: u32) -> bool {
        // 13 audits the other runs, so it always goes last when selected.
        self.selected.as_ref().is_none_or(|s| s.contains(&id))
    }

    fn simulate(&mut self, id: u32, label: &str, config: &SimConfig) -> SimResult {
        let r = run(config).unwrap_or_else(|e| panic!("criterion {id} ({label}): {e}"));
        self.audits.push((id, label.into(), r.audit.max_money_error, r.audit.max_commodity_error));
        r
    }

    fn report(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("[{verdict}] {id:>2} {name}: {detail} ({:.1}s)", started.elapsed().as_secs_f64());
        self.results.push((id, pass));
    }
}

fn within(value: f64, target: f64, tolerance: f64) -> bool {
    (value - target).abs() <= tolerance
}

fn pareto(groups: &[Histogram], policy: WindowPolicy) -> FitResult {
    fit_pareto_tail_grouped(groups, policy).unwrap_or_else(|e| panic!("tail fit: {e}"))
}

fn describe(fit: &FitResult, name: &str) -> String {
    format!(
        "{name} = {:.4} ± {:.4} (least squares {:.4}, window [{:.3}, {:.3}], healthy {})",
        fit.value(name).unwrap(),
        fit.stderr(name).unwrap(),
        fit.value(&format!("{name}_least_squares")).unwrap_or(f64::NAN),
        fit.window[0],
        fit.window[1],
        fit.healthy
    )
}

fn gibbs(s: &mut Suite) {
    let t0 = Instant::now();
    let c = SimConfig::new(Model::NoSavings, 1000, 10_000, 101).with_burn_in(10_000);
    let r = s.simulate(1, "gibbs", &c);
    let fit = fit_exponential(&r.money.estimate().unwrap()).unwrap();
    let t = fit.value("T").unwrap();
    let (ks, critical) = (fit.goodness.ks_statistic.unwrap(), fit.goodness.ks_critical.unwrap());
    let pass = within(t, 1.0, 0.05) && ks < critical;
    s.report(1, "Gibbs law", pass, format!("T = {t:.4} (target 1 ± 0.05), KS {ks:.5} vs 1% critical {critical:.5}"), t0);
}

fn gamma_form(s: &mut Suite) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, lambda) in [0.1, 0.6, 0.9].into_iter().enumerate() {
        let c = SimConfig::new(Model::UniformSavings, 1000, 10_000, 200 + k as u64)
            .with_lambda(LambdaDistSpec::Fixed { value: lambda })
            .with_burn_in(10_000)
            .with_ensembles(8);
        let r = s.simulate(2, &format!("gamma lambda={lambda}"), &c);
        let theory = gamma_params(lambda).unwrap();
        let fit = fit_gamma(&r.money.estimate().unwrap()).unwrap();
        let alpha = fit.value("alpha").unwrap();
        let alpha_ok = within(alpha, theory.alpha, 0.1 * theory.alpha);
        pass &= alpha_ok;
        let merged = r.money.estimate().unwrap();
        let (m1, m2) = (merged.binned_raw_moment(1), merged.binned_raw_moment(2));
        parts.push(format!(
            "lambda {lambda}: alpha {alpha:.4} vs {:.4} (moment-matched {:.4}, reported only)",
            theory.alpha,
            m1 * m1 / (m2 - m1 * m1) - 1.0
        ));
        // Moments per ensemble; their spread gives the statistical error.
        for order in 1..=4u32 {
            let per: Vec<f64> = r
                .money_by_ensemble
                .iter()
                .map(|h| h.estimate().unwrap().binned_raw_moment(order as i32))
                .collect();
            let g = per.len() as f64;
            let mean = per.iter().sum::<f64>() / g;
            let se = (per.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (g - 1.0) / g).sqrt();
            let predicted = theory.raw_moment(order);
            let deviation = (mean - predicted) / predicted;
            if order <= 3 {
                let ok = (mean - predicted).abs() <= 0.03 * predicted + 2.0 * se;
                pass &= ok;
                parts.push(format!("<m^{order}> {mean:.4} vs {predicted:.4} ({:+.2}%)", 100.0 * deviation));
            } else {
                parts.push(format!("<m^4> {:+.2}% (reported only)", 100.0 * deviation));
            }
        }
    }
    s.report(2, "Gamma form", pass, parts.join("; "), t0);
}

fn uniform_market(s: &mut Suite) {
    let t0 = Instant::now();
    let mut c = SimConfig::new(Model::DistributedSavings, 1000, 1000, 301)
        .with_lambda(LambdaDistSpec::uniform())
        .with_burn_in(1000)
        .with_ensembles(1000);
    c.sample_interval = 50;
    let wanted = |id| s.wants(id);
    let (want3, want6, want7) = (wanted(3), wanted(6), wanted(7));
    if want6 {
        c.lambda_bins = Some((0..=19).map(|k| 0.05 * k as f64).collect());
    }
    if want7 {
        c.difference_pairs = 1000;
    }
    let r = s.simulate(3, "uniform propensities", &c);

    if want3 {
        let fit = pareto(&r.money_by_ensemble, WindowPolicy::default());
        let nu = fit.value("nu").unwrap();
        let nu_ls = fit.value("nu_least_squares").unwrap();
        let pass = within(nu, 1.0, 0.1) && within(nu_ls, 1.0, 0.1) && fit.healthy;
        s.report(3, "Universal Pareto tail", pass, describe(&fit, "nu"), t0);
    }

    if want6 {
        let t6 = Instant::now();
        let bins: Vec<LambdaBinStats> =
            r.conditional.as_ref().unwrap().iter().flatten().filter(|b| b.lambda_hi <= 0.95 + 1e-12).cloned().collect();
        let mean = bins.iter().map(|b| b.product).sum::<f64>() / bins.len() as f64;
        let worst = bins.iter().map(|b| (b.product / mean - 1.0).abs()).fold(0.0, f64::max);
        s.report(
            6,
            "Mean-field relation",
            worst <= 0.1 && bins.len() >= 10,
            format!("<m (1 - lambda)> = {mean:.4} over {} bins, largest deviation {:.2}%", bins.len(), 100.0 * worst),
            t6,
        );
    }

    if want7 {
        let t7 = Instant::now();
        let random = pareto(r.difference_by_ensemble.as_ref().unwrap(), WindowPolicy::default());
        c.lambda_bins = None;
        c.epsilon_mode = EpsilonMode::Fixed(0.5);
        c.seed = 302;
        let half = s.simulate(7, "difference, fixed epsilon", &c);
        let fixed = pareto(half.difference_by_ensemble.as_ref().unwrap(), WindowPolicy::default());
        let (a, b) = (random.value("nu").unwrap(), fixed.value("nu").unwrap());
        let combined = random.stderr("nu").unwrap().hypot(fixed.stderr("nu").unwrap());
        let pass = within(a, 1.0, 0.15) && (a - b).abs() <= 2.0 * combined;
        s.report(
            7,
            "Money-difference tail",
            pass,
            format!("random epsilon {}; epsilon = 1/2 {}; difference {:.4} vs 2 sigma {:.4}", describe(&random, "nu"), describe(&fixed, "nu"), (a - b).abs(), 2.0 * combined),
            t7,
        );
    }
}

/// Power-law tails for non-uniform propensity densities. Ten thousand agents
/// push the finite-size cutoff out of a window starting at the top 2%.
fn tail_for(s: &mut Suite, id: u32, spec: LambdaDistSpec, burn: u64, seed: u64) -> FitResult {
    let mut c = SimConfig::new(Model::DistributedSavings, 10_000, 1000, seed)
        .with_lambda(spec.clone())
        .with_burn_in(burn)
        .with_ensembles(50);
    c.sample_interval = 50;
    let r = s.simulate(id, &format!("{spec:?}"), &c);
    pareto(&r.money_by_ensemble, WindowPolicy::TopFraction { fraction: 0.02, decades: 1.0 })
}

fn non_universal(s: &mut Suite) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, delta) in [0.5, 1.0].into_iter().enumerate() {
        let fit = tail_for(s, 4, LambdaDistSpec::PowerAboutOne { delta }, 3000, 400 + k as u64);
        pass &= within(fit.value("nu").unwrap(), 1.0 + delta, 0.15);
        parts.push(format!("delta {delta}: {} vs {}", describe(&fit, "nu"), 1.0 + delta));
    }
    s.report(4, "Non-universal exponent", pass, parts.join("; "), t0);
}

fn universal_lambda0(s: &mut Suite) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (delta, burn)) in [(-0.7, 6000), (1.0, 3000)].into_iter().enumerate() {
        let spec = LambdaDistSpec::PowerAboutLambda0 { lambda0: 0.0, delta };
        let fit = tail_for(s, 5, spec, burn, 500 + k as u64);
        pass &= within(fit.value("nu").unwrap(), 1.0, 0.15);
        parts.push(format!("delta {delta}: {}", describe(&fit, "nu")));
    }
    s.report(5, "Universality for lambda0 = 0", pass, parts.join("; "), t0);
}

fn condensation(s: &mut Suite) {
    let t0 = Instant::now();
    let c = SimConfig::new(Model::MinimumExchange, 100, 1_000_000, 801).with_burn_in(0);
    let r = s.simulate(8, "minimum exchange", &c);
    let share = r.ensembles[0].max_share;
    s.report(8, "Condensation", share > 0.99, format!("richest agent holds {:.4}% of M after 10^6 steps", 100.0 * share), t0);
}

fn richest_scaling(s: &mut Suite) {
    let t0 = Instant::now();
    let (mut gaps, mut taus) = (Vec::new(), Vec::new());
    for lambda_max in [0.9, 0.95, 0.98, 0.99] {
        let mut c = SimConfig::new(Model::DistributedSavings, 100, 2000, 901)
            .with_lambda(LambdaDistSpec::uniform())
            .with_burn_in(0)
            .with_ensembles(200);
        c.track_richest = Some(RichestTracking { pinned_lambda_max: Some(lambda_max) });
        let r = s.simulate(9, &format!("tau lambda_max={lambda_max}"), &c).richest.unwrap();
        gaps.push(1.0 - lambda_max);
        taus.push(r.tau.map_or(f64::NAN, |t| t as f64));
    }
    let tau_slope = log_log_slope(&gaps, &taus).unwrap_or(f64::NAN);
    let (mut ns, mut means) = (Vec::new(), Vec::new());
    for n in [100usize, 200, 400, 800] {
        let mut c = SimConfig::new(Model::DistributedSavings, n, 10 * n as u64, 902)
            .with_lambda(LambdaDistSpec::uniform())
            .with_burn_in(0)
            .with_ensembles(200);
        // The richest agent of a sample of N sits at 1 - lambda ~ 1/N.
        c.track_richest = Some(RichestTracking { pinned_lambda_max: Some(1.0 - 1.0 / n as f64) });
        let r = s.simulate(9, &format!("mean N={n}"), &c).richest.unwrap();
        ns.push(n as f64);
        means.push(r.long_run_mean);
    }
    let mean_slope = log_log_slope(&ns, &means).unwrap_or(f64::NAN);
    let pass = within(tau_slope, -1.0, 0.2) && within(mean_slope, 0.77, 0.1);
    s.report(
        9,
        "Richest-agent scaling",
        pass,
        format!(
            "tau slope {tau_slope:.4} (taus {taus:?}); <m(lambda_max)> slope {mean_slope:.4} (means {})",
            means.iter().map(|m| format!("{m:.2}")).collect::<Vec<_>>().join(", ")
        ),
        t0,
    );
}

fn annealed(s: &mut Suite) {
    let t0 = Instant::now();
    let spec = LambdaDistSpec::AnnealedLowerBound { zeta: Box::new(LambdaDistSpec::uniform()) };
    let mut c = SimConfig::new(Model::DistributedSavings, 100, 30_000, 1001)
        .with_lambda(spec)
        .with_burn_in(10_000)
        .with_ensembles(1000);
    c.sample_interval = 50;
    let r = s.simulate(10, "annealed", &c);
    let fit = pareto(&r.money_by_ensemble, WindowPolicy::default());
    s.report(10, "Annealed model", within(fit.value("nu").unwrap(), 1.0, 0.15), describe(&fit, "nu"), t0);
}

fn commodity_market(s: &mut Suite) {
    let t0 = Instant::now();
    let mut frozen = SimConfig::new(Model::Commodity, 1000, 1000, 1101)
        .with_lambda(LambdaDistSpec::uniform())
        .with_burn_in(1000)
        .with_ensembles(2);
    frozen.theta = 0.0;
    let r = s.simulate(11, "theta=0", &frozen);
    let w = r.wealth.as_ref().unwrap();
    let spread = (w.min - 2.0).abs().max((w.max - 2.0).abs());
    let frozen_ok = spread <= 1e-12;

    // The price noise sets only how fast the stationary state is reached,
    // and the wealth tail relaxes as 1/theta^2, so the market is brought to
    // it at theta = 1/2 and then sampled at theta = 0.05.
    let mut c = SimConfig::new(Model::Commodity, 1000, 20_000, 1102)
        .with_lambda(LambdaDistSpec::uniform())
        .with_burn_in(300_000)
        .with_ensembles(24);
    c.theta = 0.05;
    c.burn_in_theta = Some(0.5);
    c.sample_interval = 100;
    let r = s.simulate(11, "theta=0.05", &c);
    let money = pareto(&r.money_by_ensemble, WindowPolicy::default());
    // Above w = 10 the commodity share (exponential, unit scale) no longer
    // shapes the wealth density.
    let wealth = pareto(r.wealth_by_ensemble.as_ref().unwrap(), WindowPolicy::Explicit { lo: 10.0, hi: 100.0 });
    let goods = fit_exponential_tail_grouped(r.commodity_by_ensemble.as_ref().unwrap(), ExpWindowPolicy::default())
        .unwrap_or_else(|e| panic!("commodity fit: {e}"));
    let pass = frozen_ok
        && within(money.value("nu").unwrap(), 1.0, 0.1)
        && within(wealth.value("nu").unwrap(), 1.0, 0.15)
        && goods.healthy;
    s.report(
        11,
        "Commodity market",
        pass,
        format!(
            "theta = 0 wealth spread {spread:.2e}; money {}; wealth {}; commodity T = {:.4} ± {:.4} on [{:.3}, {:.3}], healthy {}",
            describe(&money, "nu"),
            describe(&wealth, "nu"),
            goods.value("T").unwrap(),
            goods.stderr("T").unwrap(),
            goods.window[0],
            goods.window[1],
            goods.healthy
        ),
        t0,
    );
}

fn oracle(s: &mut Suite) {
    let t0 = Instant::now();
    let nu = solve_selfconsistent_nu(&LambdaDistSpec::uniform()).unwrap();
    let nu_ok = within(nu, 1.0, 1e-9);
    let mut worst_norm: f64 = 0.0;
    for lambda in [0.0, 0.1, 0.5, 0.6, 0.9] {
        let p = gamma_params(lambda).unwrap();
        let total = integrate(|m| p.density(m), 0.0, 60.0, 1e-12).unwrap();
        worst_norm = worst_norm.max((total - 1.0).abs());
    }
    let grid: Vec<f64> = (0..400).map(|k| 1.5 * 1.02f64.powi(k)).collect();
    let curve = predicted_density_curve(&LambdaDistSpec::uniform(), 1.0, &grid).unwrap();
    let worst_slope = curve
        .grid
        .windows(2)
        .zip(curve.values.windows(2))
        .map(|(g, v)| ((v[1] / v[0]).ln() / (g[1] / g[0]).ln() + 2.0).abs())
        .fold(0.0, f64::max);
    let pass = nu_ok && worst_norm <= 1e-6 && worst_slope <= 1e-6;
    s.report(
        12,
        "Theory oracle exactness",
        pass,
        format!("nu(uniform) - 1 = {:.1e}; gamma normalisation error {worst_norm:.1e}; slope error {worst_slope:.1e}", nu - 1.0),
        t0,
    );
}

fn invariants(s: &mut Suite) {
    let t0 = Instant::now();
    let mut identical = true;
    let mut configs = Vec::new();
    let mut c = SimConfig::new(Model::DistributedSavings, 300, 500, 1301)
        .with_lambda(LambdaDistSpec::uniform())
        .with_burn_in(200)
        .with_ensembles(6);
    c.difference_pairs = 50;
    c.lambda_bins = Some(vec![0.0, 0.5, 0.9, 1.0]);
    configs.push(c);
    let mut c = SimConfig::new(Model::Commodity, 300, 500, 1302)
        .with_lambda(LambdaDistSpec::PowerAboutOne { delta: 1.0 })
        .with_burn_in(200)
        .with_ensembles(5);
    c.theta = 0.3;
    c.record_agents = true;
    configs.push(c);
    for c in &configs {
        let one = run_with_threads(c, 1).unwrap();
        let three = run_with_threads(c, 3).unwrap();
        let again = run_with_threads(c, 0).unwrap();
        identical &= one == three && one == again;
        s.audits.push((13, format!("{:?} rerun", c.model), one.audit.max_money_error, one.audit.max_commodity_error));
    }
    let worst = s.audits.iter().map(|a| a.2.max(a.3)).fold(0.0, f64::max);
    let breaches: Vec<String> = s
        .audits
        .iter()
        .filter(|a| !(a.2.max(a.3) <= CONSERVATION_TOLERANCE))
        .map(|a| format!("{} ({})", a.1, a.0))
        .collect();
    s.report(
        13,
        "Engineering invariants",
        identical && breaches.is_empty(),
        format!(
            "reruns at 1, 3 and all threads identical: {identical}; {} runs audited, worst relative drift {worst:.1e}{}",
            s.audits.len(),
            if breaches.is_empty() { String::new() } else { format!(", breaches: {}", breaches.join(", ")) }
        ),
        t0,
    );
}

fn main() -> ExitCode {
    let selected = std::env::var("KINEX_ACCEPTANCE").ok().map(|v| {
        v.split(',').filter_map(|x| x.trim().parse().ok()).collect::<Vec<u32>>()
    });
    let mut s = Suite { selected, results: Vec::new(), audits: Vec::new() };
    let started = Instant::now();
    if s.wants(1) {
        gibbs(&mut s);
    }
    if s.wants(2) {
        gamma_form(&mut s);
    }
    if s.wants(3) || s.wants(6) || s.wants(7) {
        uniform_market(&mut s);
    }
    if s.wants(4) {
        non_universal(&mut s);
    }
    if s.wants(5) {
        universal_lambda0(&mut s);
    }
    if s.wants(8) {
        condensation(&mut s);
    }
    if s.wants(9) {
        richest_scaling(&mut s);
    }
    if s.wants(10) {
        annealed(&mut s);
    }
    if s.wants(11) {
        commodity_market(&mut s);
    }
    if s.wants(12) {
        oracle(&mut s);
    }
    if s.wants(13) {
        invariants(&mut s);
    }
    let failed: Vec<u32> = s.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0}s",
        s.results.len() - failed.len(),
        s.results.len(),
        started.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
