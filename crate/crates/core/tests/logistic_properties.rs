use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use tvmix::distributions::{CauchyParams, GaussianParams, SamplingScheme};
use tvmix::em::{fit_interval, EmConfig};
use tvmix::logistic::{beta_objective, fit_model3, logistic, maximize_beta, predict_weights, ExogenousMatrix};
use tvmix::simgen::{generate_replicate, IntervalSizes, ModelKind, SimDesign, TrueParams, WeightTruth};

fn design(beta: Vec<f64>, k: usize, n: usize, seed: u64) -> SimDesign {
    SimDesign {
        model: ModelKind::M3,
        k,
        n_i: IntervalSizes::Fixed(n),
        true_params: TrueParams {
            gaussian: GaussianParams { mu: 0.0, sigma: 1.0 },
            cauchy: CauchyParams { theta: 0.0, delta: 1.0 },
            weights: WeightTruth::Logistic { beta },
        },
        replicates: 1,
        seed,
        sampling_scheme: SamplingScheme::DeterministicCount,
        em: EmConfig::default(),
        mcem: Default::default(),
        split: None,
    }
}

/// Nelder-Mead on the negated objective.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: &[f64], scale: f64, iters: usize) -> Vec<f64> {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += scale;
        simplex.push(p);
    }
    let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    for _ in 0..iters {
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
        let r = along(-1.0);
        let fr = f(&r);
        if fr < vals[0] {
            let e = along(-2.0);
            let fe = f(&e);
            if fe < fr {
                simplex[n] = e;
                vals[n] = fe;
            } else {
                simplex[n] = r;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            simplex[n] = r;
            vals[n] = fr;
        } else {
            let c = along(0.5);
            let fc = f(&c);
            if fc < vals[n] {
                simplex[n] = c;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                    vals[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap()).unwrap();
    simplex[best].clone()
}

#[test]
fn beta_maximizer_matches_gradient_free_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = 20;
    let rows: Vec<Vec<f64>> = (0..k).map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let x = ExogenousMatrix::unnamed(rows, true).unwrap();
    let u = Uniform::new(0.0, 1.0).unwrap();
    let resp: Vec<Vec<f64>> = (0..k).map(|_| (0..8).map(|_| u.sample(&mut rng)).collect()).collect();
    let est = maximize_beta(&resp, &x, &[0.0; 3]).unwrap();
    let oracle = nelder_mead(|b| -beta_objective(&resp, &x, b).unwrap(), &[0.0; 3], 0.5, 4000);
    for (a, b) in est.beta.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-5, "{:?} vs {oracle:?}", est.beta);
    }
}

#[test]
fn intercept_only_model3_matches_single_weight_fit() {
    let d = design(vec![0.8], 8, 40, 5);
    let data = generate_replicate(&d, 0).unwrap();
    let x = ExogenousMatrix::intercept_only(8);
    let m3 = fit_model3(&data.series, &x, &EmConfig::default()).unwrap();
    let pooled = fit_interval(&data.series.flatten(), &EmConfig::default()).unwrap();
    let p = &m3.params;
    assert!((p.gaussian.mu - pooled.params.gaussian.mu).abs() < 1e-4);
    assert!((p.gaussian.sigma - pooled.params.gaussian.sigma).abs() < 1e-4);
    assert!((p.cauchy.theta - pooled.params.cauchy.theta).abs() < 1e-4);
    assert!((p.cauchy.delta - pooled.params.cauchy.delta).abs() < 1e-4);
    assert!((logistic(p.beta[0]) - pooled.params.alpha).abs() < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn rescaling_a_predictor_rescales_its_coefficient(seed in 0u64..10_000, c in prop_oneof![-20.0..-0.05f64, 0.05..20.0f64]) {
        let d = design(vec![0.5, 1.5, -1.0], 12, 30, seed);
        let data = generate_replicate(&d, 0).unwrap();
        let x = data.x.unwrap();
        // Converge far past the default stopping rule so that both runs sit
        // on the same fixed point.
        let cfg = EmConfig { max_iter: 100_000, loglik_rtol: 1e-16, param_atol: 1e-12, ..EmConfig::default() };
        let base = fit_model3(&data.series, &x, &cfg).unwrap();
        let scaled = fit_model3(&data.series, &x.with_scaled_column(1, c), &cfg).unwrap();
        for (a, b) in base.weights.iter().zip(&scaled.weights) {
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
        // a separated fit has no finite maximizer to compare
        prop_assume!(!base.diagnostics.weights_saturated && !scaled.diagnostics.weights_saturated);
        prop_assert!((scaled.params.beta[2] * c - base.params.beta[2]).abs() < 1e-6 * (1.0 + base.params.beta[2].abs()), "{:?} vs {:?}", base.params, scaled.params);
    }

    #[test]
    fn model3_trace_never_decreases(seed in 0u64..10_000) {
        let d = design(vec![1.0, 2.0, -1.5], 15, 25, seed);
        let data = generate_replicate(&d, 0).unwrap();
        let fit = fit_model3(&data.series, data.x.as_ref().unwrap(), &EmConfig::default()).unwrap();
        for w in fit.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn predicted_weights_are_monotone_in_the_index(b0 in -3.0..3.0f64, b1 in -3.0..3.0f64, xs in proptest::collection::vec(-5.0..5.0f64, 2..30)) {
        let x = ExogenousMatrix::unnamed(xs.iter().map(|&v| vec![v]).collect(), true).unwrap();
        let params = tvmix::LogisticMixtureParams {
            gaussian: GaussianParams { mu: 0.0, sigma: 1.0 },
            cauchy: CauchyParams { theta: 0.0, delta: 1.0 },
            beta: vec![b0, b1],
        };
        let w = predict_weights(&params, &x).unwrap().values;
        let eta = x.linear_predictor(&params.beta).unwrap();
        for i in 0..w.len() {
            prop_assert!(w[i] > 0.0 && w[i] < 1.0);
            for j in 0..w.len() {
                if eta[i] < eta[j] {
                    prop_assert!(w[i] <= w[j]);
                }
            }
        }
    }
}

#[test]
fn separated_fit_is_flagged() {
    let d = design(vec![0.5, 1.5, -1.0], 12, 30, 306);
    let data = generate_replicate(&d, 0).unwrap();
    let x = data.x.unwrap();
    let fit = fit_model3(&data.series, &x, &EmConfig::default()).unwrap();
    assert!(fit.diagnostics.weights_saturated, "{:?}", fit.weights);
    assert!(fit.diagnostics.warnings.iter().any(|w| w.contains("saturate")));

    let calm = generate_replicate(&design(vec![0.5, 1.5, -1.0], 12, 30, 302), 0).unwrap();
    let fit = fit_model3(&calm.series, calm.x.as_ref().unwrap(), &EmConfig::default()).unwrap();
    assert!(!fit.diagnostics.weights_saturated);
}
