//! Closed forms checked against statrs and against roots found here with
//! textbook formulas.

use kinex::lambda::LambdaDistSpec;
use kinex::numeric::{gamma_p, ln_gamma};
use kinex::theory::*;
use statrs::distribution::{Continuous, Gamma};
use statrs::function::gamma as sg;

#[test]
fn special_functions_match_statrs() {
    for x in [0.1, 0.5, 1.0, 2.5, 7.0, 31.0, 170.0] {
        let ours = ln_gamma(x);
        let theirs = sg::ln_gamma(x);
        assert!((ours - theirs).abs() < 1e-12 * theirs.abs().max(1.0), "ln_gamma({x})");
    }
    for a in [0.5, 1.0, 4.0, 28.0] {
        for x in [0.01, 0.5, 1.0, 3.0, 30.0, 100.0] {
            let ours = gamma_p(a, x);
            let theirs = sg::gamma_lr(a, x);
            assert!((ours - theirs).abs() < 1e-12, "P({a}, {x}): {ours} vs {theirs}");
        }
    }
}

#[test]
fn gamma_density_matches_statrs() {
    for lambda in [0.0, 0.1, 0.5, 0.6, 0.9, 0.99] {
        let p = gamma_params(lambda).unwrap();
        let d = Gamma::new(p.alpha + 1.0, 1.0 / p.temperature).unwrap();
        for m in [0.05, 0.3, 0.9, 1.0, 1.4, 3.0] {
            let (ours, theirs) = (p.density(m), d.pdf(m));
            assert!((ours - theirs).abs() <= 1e-10 * theirs.max(1e-300), "lambda {lambda}, m {m}");
        }
        // Unit mean by construction.
        assert!((p.raw_moment(1) - 1.0).abs() < 1e-12);
    }
}

/// Self-consistency root for rho = (delta + 1)(1 - lambda)^delta, where
/// <lambda^nu> = Gamma(nu + 1) Gamma(delta + 2) / Gamma(nu + delta + 2).
fn power_about_one_root(delta: f64) -> f64 {
    let g = |nu: f64| {
        2.0 * (sg::ln_gamma(nu + 1.0) + sg::ln_gamma(delta + 2.0) - sg::ln_gamma(nu + delta + 2.0)).exp()
            - 1.0
    };
    let (mut lo, mut hi) = (1e-9, 64.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn self_consistent_roots() {
    let nu = solve_selfconsistent_nu(&LambdaDistSpec::uniform()).unwrap();
    assert!((nu - 1.0).abs() < 1e-9);
    for delta in [-0.5, 0.5, 1.0, 2.0] {
        let nu = solve_selfconsistent_nu(&LambdaDistSpec::PowerAboutOne { delta }).unwrap();
        let expected = power_about_one_root(delta);
        assert!((nu - expected).abs() < 1e-8, "delta {delta}: {nu} vs {expected}");
    }
    // Uniform on [lo, 1): <lambda^nu> = (1 - lo^(nu+1)) / ((nu + 1)(1 - lo)).
    let lo: f64 = 0.3;
    let nu = solve_selfconsistent_nu(&LambdaDistSpec::UniformInterval { lo, hi: 1.0 }).unwrap();
    let mean = (1.0 - lo.powf(nu + 1.0)) / ((nu + 1.0) * (1.0 - lo));
    assert!((2.0 * mean - 1.0).abs() < 1e-9);
}

#[test]
fn uniform_predictions_agree() {
    let spec = LambdaDistSpec::uniform();
    assert_eq!(predicted_tail_exponent(&spec).unwrap(), TailPrediction::PowerLaw(1.0));
    let p = TheoryPrediction::pareto(&spec).unwrap();
    assert!((p.value("nu").unwrap() - p.value("nu_self_consistent").unwrap()).abs() < 1e-9);
}

#[test]
fn predicted_density_slope_for_uniform() {
    let grid: Vec<f64> = (0..200).map(|k| 2.0 * 1.03f64.powi(k)).collect();
    let curve = predicted_density_curve(&LambdaDistSpec::uniform(), 0.5, &grid).unwrap();
    for w in curve.grid.windows(2).zip(curve.values.windows(2)) {
        let slope = (w.1[1] / w.1[0]).ln() / (w.0[1] / w.0[0]).ln();
        assert!((slope + 2.0).abs() < 1e-6);
    }
    assert!((curve.integral() - 1.0).abs() < 1e-12);
}
