use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvmix::distributions::{sample_mixture, CauchyParams, GaussianParams, MixtureParams, SamplingScheme};
use tvmix::em::{
    cauchy_objective, em_step_model1, fit_interval, fit_model1, fit_model2, newton_cauchy, run_shared_em_from_init,
    EmConfig,
};
use tvmix::model::{observed_loglik, IntervalSeries};

fn standard(alpha: f64) -> MixtureParams {
    MixtureParams {
        gaussian: GaussianParams { mu: 0.0, sigma: 1.0 },
        cauchy: CauchyParams { theta: 0.0, delta: 1.0 },
        alpha,
    }
}

/// Brute-force maximizer of the weighted Cauchy objective: a coarse scan
/// followed by a 1e-3 grid around the coarse optimum.
fn grid_oracle(y: &[f64], w: &[f64], center: f64, spread: f64) -> (f64, f64) {
    let eval = |t: f64, d: f64| cauchy_objective(y, w, &CauchyParams { theta: t, delta: d });
    let mut best = (center, spread, f64::NEG_INFINITY);
    let coarse = 0.02 * spread;
    for i in -250..=250 {
        let t = center + i as f64 * coarse;
        for j in 1..=300 {
            let d = j as f64 * coarse;
            let f = eval(t, d);
            if f > best.2 {
                best = (t, d, f);
            }
        }
    }
    let (t0, d0) = (best.0, best.1);
    for i in -60..=60 {
        let t = t0 + i as f64 * 1e-3;
        for j in -60..=60 {
            let d = d0 + j as f64 * 1e-3;
            if d <= 0.0 {
                continue;
            }
            let f = eval(t, d);
            if f > best.2 {
                best = (t, d, f);
            }
        }
    }
    (best.0, best.1)
}

#[test]
fn newton_matches_grid_on_unweighted_cauchy_draws() {
    let y = sample_mixture(200, &standard(0.0), 7, SamplingScheme::DeterministicCount).unwrap().values;
    let w = vec![1.0; y.len()];
    let est = newton_cauchy(&y, &w, CauchyParams { theta: 0.3, delta: 2.0 }, &EmConfig::default()).unwrap();
    let (t, d) = grid_oracle(&y, &w, 0.0, 1.0);
    assert!((est.params.theta - t).abs() < 2e-3, "{:?} vs ({t}, {d})", est.params);
    assert!((est.params.delta - d).abs() < 2e-3, "{:?} vs ({t}, {d})", est.params);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn newton_matches_grid_on_weighted_instances(seed in 0u64..10_000, n in 30usize..300, theta in -2.0..2.0f64, delta in 0.3..3.0f64) {
        let p = MixtureParams { gaussian: GaussianParams { mu: 0.0, sigma: 1.0 }, cauchy: CauchyParams { theta, delta }, alpha: 0.0 };
        let y = sample_mixture(n, &p, seed, SamplingScheme::DeterministicCount).unwrap().values;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
        let est = newton_cauchy(&y, &w, CauchyParams { theta: theta + 0.5, delta: 1.0 }, &EmConfig::default()).unwrap();
        let (t, d) = grid_oracle(&y, &w, theta, delta);
        prop_assert!((est.params.theta - t).abs() < 2e-3, "{:?} vs ({}, {})", est.params, t, d);
        prop_assert!((est.params.delta - d).abs() < 2e-3, "{:?} vs ({}, {})", est.params, t, d);
    }

    #[test]
    fn model1_trace_never_decreases(seed in 0u64..100_000, alpha in 0.1..0.95f64, n in 20usize..150) {
        let y = sample_mixture(n, &standard(alpha), seed, SamplingScheme::Bernoulli).unwrap().values;
        let fit = fit_interval(&y, &EmConfig::default()).unwrap();
        for w in fit.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn model2_trace_never_decreases(seed in 0u64..100_000, a in 0.1..0.9f64, b in 0.1..0.9f64) {
        let ys: Vec<Vec<f64>> = [a, b, 0.5].iter().enumerate()
            .map(|(i, &al)| sample_mixture(40, &standard(al), seed + i as u64, SamplingScheme::DeterministicCount).unwrap().values)
            .collect();
        let fit = fit_model2(&IntervalSeries::unlabelled(ys).unwrap(), &EmConfig::default()).unwrap();
        for w in fit.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn permuting_an_interval_changes_nothing(seed in 0u64..100_000) {
        let y = sample_mixture(60, &standard(0.7), seed, SamplingScheme::DeterministicCount).unwrap().values;
        let mut z = y.clone();
        z.reverse();
        z.rotate_left(seed as usize % 60);
        let (a, b) = (fit_interval(&y, &EmConfig::default()).unwrap(), fit_interval(&z, &EmConfig::default()).unwrap());
        let (pa, pb) = (a.params, b.params);
        for (u, v) in [(pa.gaussian.mu, pb.gaussian.mu), (pa.gaussian.sigma, pb.gaussian.sigma), (pa.cauchy.theta, pb.cauchy.theta), (pa.cauchy.delta, pb.cauchy.delta), (pa.alpha, pb.alpha)] {
            prop_assert!((u - v).abs() < 1e-6, "{:?} vs {:?}", pa, pb);
        }
    }
}

#[test]
fn converged_responsibilities_are_a_fixed_point() {
    let cfg = EmConfig::default();
    for seed in 0..20 {
        let y = sample_mixture(100, &standard(0.6), seed, SamplingScheme::DeterministicCount).unwrap().values;
        let fit = fit_interval(&y, &cfg).unwrap();
        if !fit.converged {
            continue;
        }
        let next = em_step_model1(&y, &fit.params, &cfg).unwrap();
        let d = [
            next.gaussian.mu - fit.params.gaussian.mu,
            next.gaussian.sigma - fit.params.gaussian.sigma,
            next.cauchy.theta - fit.params.cauchy.theta,
            next.cauchy.delta - fit.params.cauchy.delta,
            next.alpha - fit.params.alpha,
        ];
        assert!(d.iter().all(|x| x.abs() < 10.0 * cfg.param_atol), "seed {seed}: {d:?}");
    }
}

#[test]
fn pooled_shared_engine_reproduces_model1_trace() {
    for seed in [1, 2, 3] {
        let y = sample_mixture(80, &standard(0.8), seed, SamplingScheme::DeterministicCount).unwrap().values;
        let single = fit_interval(&y, &EmConfig::default()).unwrap();
        let (comps, trace) = run_shared_em_from_init(&IntervalSeries::single(y).unwrap(), &EmConfig::default()).unwrap();
        assert_eq!(trace, single.loglik_trace);
        assert_eq!(comps.0, single.params.gaussian);
        assert_eq!(comps.1, single.params.cauchy);
    }
}

#[test]
fn model1_isolates_interval_failures() {
    let good = sample_mixture(50, &standard(0.7), 3, SamplingScheme::DeterministicCount).unwrap().values;
    let series = IntervalSeries::unlabelled(vec![good.clone(), vec![2.0; 10], good]).unwrap();
    let fits = fit_model1(&series, &EmConfig::default());
    assert!(fits[0].is_ok() && fits[2].is_ok());
    assert!(fits[1].is_err());
}

#[test]
fn model2_fit_improves_on_its_start() {
    let ys: Vec<Vec<f64>> = [0.9, 0.2, 0.6, 0.8]
        .iter()
        .enumerate()
        .map(|(i, &a)| sample_mixture(50, &standard(a), 40 + i as u64, SamplingScheme::DeterministicCount).unwrap().values)
        .collect();
    let series = IntervalSeries::unlabelled(ys).unwrap();
    let fit = fit_model2(&series, &EmConfig::default()).unwrap();
    let end = observed_loglik(&series, &fit.interval_mixtures()).unwrap();
    assert!((end - fit.loglik_trace.last().unwrap()).abs() < 1e-9);
    assert!(end >= fit.loglik_trace[0]);
    assert!(fit.weights[0] > fit.weights[1]);
}
