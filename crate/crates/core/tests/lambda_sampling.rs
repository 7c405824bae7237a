//! Samplers against closed-form CDFs written out independently here.

use kinex::lambda::{sample_annealed, sample_quenched, LambdaDistSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 1_000_000;

/// Asymptotic 1% critical value of the one-sample KS statistic.
fn ks_critical(n: usize) -> f64 {
    1.6276 / (n as f64).sqrt()
}

fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn power_about_lambda0_cdf(l0: f64, d: f64, x: f64) -> f64 {
    let p = d + 1.0;
    let z = l0.powf(p) + (1.0 - l0).powf(p);
    if x < l0 {
        (l0.powf(p) - (l0 - x).powf(p)) / z
    } else {
        (l0.powf(p) + (x - l0).powf(p)) / z
    }
}

fn draw(spec: &LambdaDistSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_quenched(spec, SAMPLES, &mut rng).unwrap()
}

fn assert_ks(spec: LambdaDistSpec, cdf: impl Fn(f64) -> f64) {
    let xs = draw(&spec, 2024);
    assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
    let d = ks_distance(xs, cdf);
    assert!(d < ks_critical(SAMPLES), "{spec:?}: D = {d}");
}

#[test]
fn uniform_interval() {
    assert_ks(LambdaDistSpec::uniform(), |x| x);
    assert_ks(LambdaDistSpec::UniformInterval { lo: 0.2, hi: 0.7 }, |x| ((x - 0.2) / 0.5).clamp(0.0, 1.0));
}

#[test]
fn power_about_one() {
    for delta in [-0.5, 0.5, 1.0, 3.0] {
        assert_ks(LambdaDistSpec::PowerAboutOne { delta }, |x| 1.0 - (1.0 - x).powf(delta + 1.0));
    }
}

#[test]
fn power_about_lambda0() {
    for (l0, d) in [(0.0, -0.7), (0.0, 1.0), (0.5, 2.0), (0.3, -0.5), (0.9, 0.0)] {
        assert_ks(LambdaDistSpec::PowerAboutLambda0 { lambda0: l0, delta: d }, |x| {
            power_about_lambda0_cdf(l0, d, x)
        });
    }
}

#[test]
fn mixture_has_exact_atom_and_continuous_rest() {
    let spec = LambdaDistSpec::Mixed {
        fraction: 0.3,
        lambda1: 0.25,
        rest: Box::new(LambdaDistSpec::PowerAboutOne { delta: 1.0 }),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = sample_quenched(&spec, 1001, &mut rng).unwrap();
    assert_eq!(xs.iter().filter(|&&x| x == 0.25).count(), 300);
    let rest: Vec<f64> = xs[300..].to_vec();
    let d = ks_distance(rest, |x| 1.0 - (1.0 - x).powf(2.0));
    assert!(d < ks_critical(701));
}

/// Two-stage draw: mu uniform, then lambda uniform on [mu, 1). The marginal
/// CDF is x + (1 - x) ln(1 - x).
#[test]
fn annealed_marginal() {
    let spec = LambdaDistSpec::AnnealedLowerBound { zeta: Box::new(LambdaDistSpec::uniform()) };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mus = sample_quenched(&spec, SAMPLES, &mut rng).unwrap();
    let xs: Vec<f64> = mus.iter().map(|&mu| sample_annealed(mu, &mut rng).unwrap()).collect();
    assert!(xs.iter().zip(&mus).all(|(x, mu)| x >= mu && *x < 1.0));
    let d = ks_distance(xs, |x| if x >= 1.0 { 1.0 } else { x + (1.0 - x) * (1.0 - x).ln() });
    assert!(d < ks_critical(SAMPLES), "D = {d}");
    // And the lower bounds themselves follow zeta.
    assert!(ks_distance(mus, |x| x) < ks_critical(SAMPLES));
}

#[test]
fn density_agrees_with_closed_form() {
    let spec = LambdaDistSpec::PowerAboutLambda0 { lambda0: 0.3, delta: 2.0 };
    let z = (0.3f64.powi(3) + 0.7f64.powi(3)) / 3.0;
    for x in [0.0, 0.1, 0.3, 0.5, 0.99] {
        let expected = (0.3f64 - x).abs().powi(2) / z;
        assert!((spec.density(x).unwrap() - expected).abs() < 1e-12 * (1.0 + expected));
    }
}

fn any_spec() -> impl Strategy<Value = LambdaDistSpec> {
    prop_oneof![
        (0.0..0.99f64).prop_map(|lo| LambdaDistSpec::UniformInterval { lo, hi: 1.0 }),
        (-0.999..5.0f64).prop_map(|delta| LambdaDistSpec::PowerAboutOne { delta }),
        (0.0..=1.0f64, -0.999..3.0f64)
            .prop_map(|(lambda0, delta)| LambdaDistSpec::PowerAboutLambda0 { lambda0, delta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_sample_reaches_one(spec in any_spec(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = sample_quenched(&spec, 20_000, &mut rng).unwrap();
        prop_assert!(xs.iter().all(|&x| (0.0..1.0).contains(&x)));
        for &mu in xs.iter().take(1000) {
            let l = sample_annealed(mu, &mut rng).unwrap();
            prop_assert!(l >= mu && l < 1.0);
        }
    }

    #[test]
    fn same_seed_same_draws(spec in any_spec(), seed in any::<u64>()) {
        let a = sample_quenched(&spec, 100, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let b = sample_quenched(&spec, 100, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
