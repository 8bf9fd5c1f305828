//! Simulation designs and the replication harness.
//!
//! Simulated predictors are i.i.d. standard normal; the source study does
//! not state its predictor distribution, and the bias of `beta` estimates
//! depends on it.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{sample_mixture_with, CauchyParams, GaussianParams, MixtureParams, SamplingScheme};
use crate::em::{fit_model1, fit_model2, EmConfig};
use crate::error::{Error, Result};
use crate::logistic::{fit_model3, logistic, predict_weights, ExogenousMatrix};
use crate::mcem::{ar1_covariance, mcem_fit, Ar1Params, McemConfig};
use crate::model::IntervalSeries;
use crate::rng::{stream_id, stream_rng};

/// Weight schedule of the ten-interval Model 2 study.
pub const TABLE6_ALPHAS: [f64; 10] = [0.7, 0.75, 0.8, 0.85, 0.9, 0.1, 0.2, 0.6, 0.75, 0.9];

/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    M1,
    M2,
    M3,
    M4,
}

/// Interval sizes: one shared size or one per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntervalSizes {
    Fixed(usize),
    Schedule(Vec<usize>),
}

impl IntervalSizes {
    fn get(&self, i: usize) -> usize {
        match self {
            IntervalSizes::Fixed(n) => *n,
            IntervalSizes::Schedule(v) => v[i],
        }
    }
}

/// How the true Gaussian weights are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightTruth {
    Constant { alpha: f64 },
    Schedule { alphas: Vec<f64> },
    /// `alpha_i = logistic(x_i . beta)`; `beta[0]` is the intercept.
    Logistic { beta: Vec<f64> },
    /// `alpha_i = logistic(x_i . beta + e_i)` with AR(1) `e`.
    LogisticAr1 { beta: Vec<f64>, ar1: Ar1Params },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub gaussian: GaussianParams,
    pub cauchy: CauchyParams,
    pub weights: WeightTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub model: ModelKind,
    pub k: usize,
    pub n_i: IntervalSizes,
    pub true_params: TrueParams,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub sampling_scheme: SamplingScheme,
    #[serde(default)]
    pub em: EmConfig,
    #[serde(default)]
    pub mcem: McemConfig,
    /// Training fraction for the weight-prediction protocol.
    #[serde(default)]
    pub split: Option<f64>,
}

/// Smooth level-plus-sinusoid schedule for figure-style weight tracks.
pub fn default_schedule(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| 0.55 + 0.3 * (2.0 * std::f64::consts::PI * i as f64 / k.max(1) as f64).sin())
        .collect()
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidInput("replicates must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be >= 1".into()));
        }
        match &self.n_i {
            IntervalSizes::Fixed(0) => return Err(Error::InvalidInput("n_i must be >= 1".into())),
            IntervalSizes::Schedule(v) if v.len() != self.k || v.contains(&0) => {
                return Err(Error::InvalidInput(format!("n_i schedule needs {} positive sizes", self.k)))
            }
            _ => {}
        }
        let tp = &self.true_params;
        tp.gaussian.validate()?;
        tp.cauchy.validate()?;
        let in_unit = |a: &f64| (0.0..=1.0).contains(a);
        match (&self.model, &tp.weights) {
            (ModelKind::M1 | ModelKind::M2, WeightTruth::Constant { alpha }) if in_unit(alpha) => {}
            (ModelKind::M1 | ModelKind::M2, WeightTruth::Schedule { alphas })
                if alphas.len() == self.k && alphas.iter().all(in_unit) => {}
            (ModelKind::M3, WeightTruth::Logistic { beta }) if !beta.is_empty() => {}
            (ModelKind::M4, WeightTruth::LogisticAr1 { beta, ar1 }) if !beta.is_empty() => ar1.validate()?,
            (m, w) => {
                return Err(Error::InvalidInput(format!("weight truth {w:?} does not fit model {m:?} with k = {}", self.k)))
            }
        }
        if let Some(s) = self.split {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidInput(format!("split must lie in (0, 1), got {s}")));
            }
        }
        self.em.validate()?;
        if self.model == ModelKind::M4 {
            self.mcem.validate()?;
        }
        Ok(())
    }

    /// Number of non-intercept predictors.
    pub fn p(&self) -> usize {
        match &self.true_params.weights {
            WeightTruth::Logistic { beta } | WeightTruth::LogisticAr1 { beta, .. } => beta.len() - 1,
            _ => 0,
        }
    }

    /// Parameter names in summary order, with their true values.
    pub fn parameter_truth(&self) -> Vec<(String, f64)> {
        let tp = &self.true_params;
        let comps = [
            ("mu", tp.gaussian.mu),
            ("sigma", tp.gaussian.sigma),
            ("theta", tp.cauchy.theta),
            ("delta", tp.cauchy.delta),
        ];
        let mut out = Vec::new();
        match self.model {
            ModelKind::M1 => {
                let alphas = self.schedule();
                for (i, a) in alphas.iter().enumerate() {
                    let sfx = if self.k == 1 { String::new() } else { format!("[{}]", i + 1) };
                    out.extend(comps.iter().map(|(n, v)| (format!("{n}{sfx}"), *v)));
                    out.push((format!("alpha{sfx}"), *a));
                }
            }
            ModelKind::M2 => {
                out.extend(comps.iter().map(|(n, v)| (n.to_string(), *v)));
                out.extend(self.schedule().iter().enumerate().map(|(i, a)| (format!("alpha[{}]", i + 1), *a)));
            }
            ModelKind::M3 | ModelKind::M4 => {
                out.extend(comps.iter().map(|(n, v)| (n.to_string(), *v)));
                let (WeightTruth::Logistic { beta } | WeightTruth::LogisticAr1 { beta, .. }) = &tp.weights else {
                    unreachable!("validated design")
                };
                out.extend(beta.iter().enumerate().map(|(j, b)| (format!("beta{j}"), *b)));
                if let WeightTruth::LogisticAr1 { ar1, .. } = &tp.weights {
                    out.push(("phi".into(), ar1.phi));
                    out.push(("sigma_a".into(), ar1.sigma_a));
                }
            }
        }
        out
    }

    fn schedule(&self) -> Vec<f64> {
        match &self.true_params.weights {
            WeightTruth::Constant { alpha } => vec![*alpha; self.k],
            WeightTruth::Schedule { alphas } => alphas.clone(),
            _ => Vec::new(),
        }
    }
}

/// One simulated dataset with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub series: IntervalSeries,
    pub x: Option<ExogenousMatrix>,
    pub true_weights: Vec<f64>,
    /// Number of Gaussian-labelled draws per interval.
    pub gaussian_counts: Vec<usize>,
}

/// Generates replicate 0 of a design.
pub fn generate(design: &SimDesign) -> Result<SimDataset> {
    generate_replicate(design, 0)
}

/// Generates one replicate on its own random stream.
pub fn generate_replicate(design: &SimDesign, replicate: u64) -> Result<SimDataset> {
    design.validate()?;
    let mut rng = stream_rng(design.seed, stream_id(replicate, 0));
    let k = design.k;
    let tp = &design.true_params;
    let (weights, x) = match &tp.weights {
        WeightTruth::Constant { .. } | WeightTruth::Schedule { .. } => (design.schedule(), None),
        WeightTruth::Logistic { beta } | WeightTruth::LogisticAr1 { beta, .. } => {
            let p = beta.len() - 1;
            let rows: Vec<Vec<f64>> =
                (0..k).map(|_| (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()).collect();
            let names = (1..=p).map(|j| format!("x{j}")).collect();
            let x = ExogenousMatrix::new(rows, names, true)?;
            let mut eta = x.linear_predictor(beta)?;
            if let WeightTruth::LogisticAr1 { ar1, .. } = &tp.weights {
                let chol = ar1_covariance(ar1, k)?
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("AR(1) covariance is not positive definite".into()))?;
                let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                let e = chol.l() * z;
                eta.iter_mut().zip(e.iter()).for_each(|(a, b)| *a += b);
            }
            (eta.into_iter().map(logistic).collect(), Some(x))
        }
    };
    let mut intervals = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for (i, &alpha) in weights.iter().enumerate() {
        let mix = MixtureParams { gaussian: tp.gaussian, cauchy: tp.cauchy, alpha };
        let s = sample_mixture_with(design.n_i.get(i), &mix, design.sampling_scheme, &mut rng)?;
        counts.push(s.gaussian_count());
        intervals.push(s.values);
    }
    let labels = (1..=k).map(|i| i.to_string()).collect();
    Ok(SimDataset { series: IntervalSeries::new(intervals, labels)?, x, true_weights: weights, gaussian_counts: counts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamRow {
    pub parameter: String,
    pub truth: f64,
    pub mean: f64,
    /// Standard deviation of the estimates across replicates.
    pub se: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub interval: usize,
    /// True weight, or its mean across replicates when predictors are random.
    pub truth: f64,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackRow {
    pub interval: usize,
    pub truth: f64,
    pub estimated: Option<f64>,
    pub predicted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSummary {
    pub replicates: usize,
    pub failed: usize,
    pub failures: Vec<String>,
    pub parameters: Vec<ParamRow>,
    pub weights: Vec<WeightRow>,
    /// Mean over replicates of the per-interval weight MSE.
    pub weight_mse: f64,
    /// Weight track of the first successful replicate.
    pub track: Vec<TrackRow>,
    pub train_test: Option<TrainTest>,
}

/// `(mean, sd, mse)` of a set of estimates against a true value.
pub fn summarize(estimates: &[f64], truth: f64) -> (f64, f64, f64) {
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let ss = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>();
    let sd = if estimates.len() > 1 { (ss / (r - 1.0)).sqrt() } else { 0.0 };
    let mse = estimates.iter().map(|e| (e - truth) * (e - truth)).sum::<f64>() / r;
    (mean, sd, mse)
}

struct Outcome {
    estimates: Vec<f64>,
    weights: Vec<f64>,
    truth: Vec<f64>,
}

fn fit_replicate(design: &SimDesign, data: &SimDataset, replicate: u64) -> Result<Outcome> {
    let (estimates, weights) = match design.model {
        ModelKind::M1 => {
            let mut est = Vec::new();
            let mut w = Vec::new();
            for (i, fit) in fit_model1(&data.series, &design.em).into_iter().enumerate() {
                let fit = fit.map_err(|e| Error::Numerical(format!("interval {}: {e}", i + 1)))?;
                let p = fit.params;
                est.extend([p.gaussian.mu, p.gaussian.sigma, p.cauchy.theta, p.cauchy.delta, p.alpha]);
                w.push(p.alpha);
            }
            (est, w)
        }
        ModelKind::M2 => {
            let fit = fit_model2(&data.series, &design.em)?;
            let p = &fit.params;
            let mut est = vec![p.gaussian.mu, p.gaussian.sigma, p.cauchy.theta, p.cauchy.delta];
            est.extend_from_slice(&p.alphas);
            (est, fit.weights)
        }
        ModelKind::M3 => {
            let x = data.x.as_ref().expect("m3 data carries predictors");
            let fit = fit_model3(&data.series, x, &design.em)?;
            let p = &fit.params;
            let mut est = vec![p.gaussian.mu, p.gaussian.sigma, p.cauchy.theta, p.cauchy.delta];
            est.extend_from_slice(&p.beta);
            (est, fit.weights)
        }
        ModelKind::M4 => {
            let x = data.x.as_ref().expect("m4 data carries predictors");
            let fit = mcem_fit(&data.series, x, &design.mcem, design.seed ^ replicate.rotate_left(32))?;
            (fit.params.to_vec(), fit.weights)
        }
    };
    Ok(Outcome { estimates, weights, truth: data.true_weights.clone() })
}

/// Fits every replicate of a design and aggregates the estimates.
///
/// Failed replicates are excluded and counted; more than
/// [`MAX_FAILURE_FRACTION`] failures abort the run.
pub fn run_replications(design: &SimDesign) -> Result<SimSummary> {
    design.validate()?;
    let results: Vec<Result<Outcome>> = (0..design.replicates as u64)
        .into_par_iter()
        .map(|r| generate_replicate(design, r).and_then(|d| fit_replicate(design, &d, r)))
        .collect();
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(o) => ok.push(o),
            Err(e) => failures.push(format!("replicate {r}: {e}")),
        }
    }
    let failed = failures.len();
    if ok.is_empty() || failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }

    let parameters = design
        .parameter_truth()
        .into_iter()
        .enumerate()
        .map(|(j, (name, truth))| {
            let est: Vec<f64> = ok.iter().map(|o| o.estimates[j]).collect();
            let (mean, se, mse) = summarize(&est, truth);
            ParamRow { parameter: name, truth, mean, se, mse }
        })
        .collect();
    let weights = (0..design.k)
        .map(|i| {
            let est: Vec<f64> = ok.iter().map(|o| o.weights[i]).collect();
            let truth = ok.iter().map(|o| o.truth[i]).sum::<f64>() / ok.len() as f64;
            let (mean, se, _) = summarize(&est, truth);
            WeightRow { interval: i + 1, truth, mean, se }
        })
        .collect();
    let weight_mse = ok.iter().map(|o| mse(&o.weights, &o.truth)).sum::<f64>() / ok.len() as f64;
    let first = &ok[0];
    let track = first
        .truth
        .iter()
        .zip(&first.weights)
        .enumerate()
        .map(|(i, (&t, &e))| TrackRow { interval: i + 1, truth: t, estimated: Some(e), predicted: None })
        .collect();
    let train_test = match design.split {
        Some(s) if matches!(design.model, ModelKind::M3 | ModelKind::M4) => Some(train_test_weight_eval(design, s)?),
        _ => None,
    };
    Ok(SimSummary { replicates: total, failed, failures, parameters, weights, weight_mse, track, train_test })
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTest {
    pub train_intervals: usize,
    pub test_intervals: usize,
    /// Replicate-averaged MSE of fitted weights on the training intervals.
    pub train_mse: f64,
    /// Replicate-averaged MSE of predicted weights on the held-out intervals.
    pub test_mse: f64,
    pub failed: usize,
    /// Track of the first successful replicate: estimated on the training
    /// intervals, predicted on the test intervals.
    pub track: Vec<TrackRow>,
}

/// Weight-prediction protocol: fit Model 3 on the leading `split` share of
/// intervals, predict the rest from predictors alone, and score both parts
/// against the true weights. Model 4 designs are also fitted with Model 3.
pub fn train_test_weight_eval(design: &SimDesign, split: f64) -> Result<TrainTest> {
    design.validate()?;
    if !matches!(design.model, ModelKind::M3 | ModelKind::M4) {
        return Err(Error::InvalidInput("weight prediction needs an m3 or m4 design".into()));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::InvalidInput(format!("split must lie in (0, 1), got {split}")));
    }
    let k_train = (split * design.k as f64).round() as usize;
    let p = design.p();
    if k_train < p + 2 || k_train >= design.k {
        return Err(Error::InvalidInput(format!(
            "split {split} leaves {k_train} training and {} test intervals; need >= {} training and >= 1 test",
            design.k - k_train.min(design.k),
            p + 2
        )));
    }
    let results: Vec<Result<(f64, f64, Vec<TrackRow>)>> = (0..design.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let data = generate_replicate(design, r)?;
            let x = data.x.as_ref().expect("m3/m4 data carries predictors");
            let train = data.series.slice(0..k_train)?;
            let fit = fit_model3(&train, &x.slice(0..k_train)?, &design.em)?;
            let pred = predict_weights(&fit.params, &x.slice(k_train..design.k)?)?;
            let (t_train, t_test) = data.true_weights.split_at(k_train);
            let track = data
                .true_weights
                .iter()
                .enumerate()
                .map(|(i, &t)| TrackRow {
                    interval: i + 1,
                    truth: t,
                    estimated: (i < k_train).then(|| fit.weights[i]),
                    predicted: (i >= k_train).then(|| pred.values[i - k_train]),
                })
                .collect();
            Ok((mse(&fit.weights, t_train), mse(&pred.values, t_test), track))
        })
        .collect();
    let total = results.len();
    let ok: Vec<_> = results.into_iter().filter_map(Result::ok).collect();
    let failed = total - ok.len();
    if ok.is_empty() || failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    let n = ok.len() as f64;
    Ok(TrainTest {
        train_intervals: k_train,
        test_intervals: design.k - k_train,
        train_mse: ok.iter().map(|r| r.0).sum::<f64>() / n,
        test_mse: ok.iter().map(|r| r.1).sum::<f64>() / n,
        failed,
        track: ok.into_iter().next().map(|r| r.2).unwrap_or_default(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl SimSummary {
    /// One row per parameter: `parameter,true,mean,se,mse`.
    pub fn write_parameters_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["parameter", "true", "mean", "se", "mse"]).map_err(csv_err)?;
        for r in &self.parameters {
            wr.write_record([r.parameter.clone(), r.truth.to_string(), r.mean.to_string(), r.se.to_string(), r.mse.to_string()])
                .map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::Data(e.to_string()))
    }

    /// Per-interval weight summary: `interval,true,mean,se`.
    pub fn write_weights_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["interval", "true", "mean", "se"]).map_err(csv_err)?;
        for r in &self.weights {
            wr.write_record([r.interval.to_string(), r.truth.to_string(), r.mean.to_string(), r.se.to_string()])
                .map_err(csv_err)?;
        }
        wr.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

/// Weight track for plotting: `interval,true,estimated,predicted`.
pub fn write_track_csv<W: Write>(track: &[TrackRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["interval", "true", "estimated", "predicted"]).map_err(csv_err)?;
    for r in track {
        wr.write_record([r.interval.to_string(), r.truth.to_string(), opt(r.estimated), opt(r.predicted)])
            .map_err(csv_err)?;
    }
    wr.flush().map_err(|e| Error::Data(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard(weights: WeightTruth, model: ModelKind, k: usize, n: usize) -> SimDesign {
        SimDesign {
            model,
            k,
            n_i: IntervalSizes::Fixed(n),
            true_params: TrueParams {
                gaussian: GaussianParams { mu: 0.0, sigma: 1.0 },
                cauchy: CauchyParams { theta: 0.0, delta: 1.0 },
                weights,
            },
            replicates: 4,
            seed: 11,
            sampling_scheme: SamplingScheme::DeterministicCount,
            em: EmConfig::default(),
            mcem: McemConfig::default(),
            split: None,
        }
    }

    #[test]
    fn m1_split_is_exact() {
        let d = standard(WeightTruth::Constant { alpha: 0.9 }, ModelKind::M1, 1, 100);
        assert_eq!(generate(&d).unwrap().gaussian_counts, vec![90]);
    }

    #[test]
    fn m2_schedule_shape() {
        let d = standard(WeightTruth::Schedule { alphas: TABLE6_ALPHAS.to_vec() }, ModelKind::M2, 10, 50);
        let s = generate(&d).unwrap();
        assert_eq!(s.series.k(), 10);
        assert!(s.series.sizes().iter().all(|&n| n == 50));
        assert_eq!(generate(&d).unwrap(), s);
    }

    #[test]
    fn m4_with_vanishing_noise_matches_m3() {
        let beta = vec![1.0, 3.0, -2.0];
        let d3 = standard(WeightTruth::Logistic { beta: beta.clone() }, ModelKind::M3, 12, 5);
        let ar1 = Ar1Params { phi: 0.5, sigma_a: 1e-100 };
        let d4 = standard(WeightTruth::LogisticAr1 { beta, ar1 }, ModelKind::M4, 12, 5);
        assert_eq!(generate(&d3).unwrap().true_weights, generate(&d4).unwrap().true_weights);
    }

    #[test]
    fn mismatched_truth_is_refused() {
        let d = standard(WeightTruth::Constant { alpha: 0.5 }, ModelKind::M3, 10, 5);
        assert!(d.validate().is_err());
        let mut d = standard(WeightTruth::Logistic { beta: vec![0.0, 1.0] }, ModelKind::M3, 10, 5);
        d.split = Some(1.0);
        assert!(d.validate().is_err());
        assert!(train_test_weight_eval(&standard(WeightTruth::Logistic { beta: vec![0.0, 1.0] }, ModelKind::M3, 10, 5), 1.0).is_err());
    }

    #[test]
    fn design_round_trips_through_json() {
        let d = standard(WeightTruth::Schedule { alphas: TABLE6_ALPHAS.to_vec() }, ModelKind::M2, 10, 50);
        let s = serde_json::to_string(&d).unwrap();
        let back: SimDesign = serde_json::from_str(&s).unwrap();
        assert_eq!(back, d);
        let minimal = r#"{"model":"m1","k":1,"n_i":100,"replicates":5,"seed":1,
            "true_params":{"gaussian":{"mu":0,"sigma":1},"cauchy":{"theta":0,"delta":1},
            "weights":{"kind":"constant","alpha":0.9}}}"#;
        let d: SimDesign = serde_json::from_str(minimal).unwrap();
        assert_eq!(d.sampling_scheme, SamplingScheme::DeterministicCount);
    }

    #[test]
    fn summary_identity() {
        let est = [0.3, -0.1, 0.25, 0.7, 0.05];
        let (m, sd, mse) = summarize(&est, 0.2);
        let r = est.len() as f64;
        assert!((mse - ((m - 0.2).powi(2) + sd * sd * (r - 1.0) / r)).abs() < 1e-12);
    }

    #[test]
    fn replication_summary_shape() {
        let d = standard(WeightTruth::Schedule { alphas: vec![0.8, 0.3, 0.6] }, ModelKind::M2, 3, 40);
        let s = run_replications(&d).unwrap();
        assert_eq!(s.parameters.len(), 7);
        assert_eq!(s.weights.len(), 3);
        assert_eq!(s.replicates, 4);
        let mut buf = Vec::new();
        s.write_parameters_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("parameter,true,mean,se,mse\nmu,0,"));
    }
}
