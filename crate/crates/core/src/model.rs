//! Types shared by every model: grouped observations, weight tracks and
//! fit results.
//!
//! All four models are instances of one time-varying two-component form:
//! in interval `i` the observations follow
//! `alpha_i * N(mu_i, sigma_i) + (1 - alpha_i) * Cauchy(theta_i, delta_i)`.
//! They differ only in which of those quantities are shared across
//! intervals and how `alpha_i` is generated.

use serde::{Deserialize, Serialize};

use crate::distributions::{CauchyParams, GaussianParams, MixtureParams};
use crate::error::{Error, Result};

/// Observations grouped into `k` consecutive time intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSeries {
    intervals: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl IntervalSeries {
    pub fn new(intervals: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidInput("series needs at least one interval".into()));
        }
        if labels.len() != intervals.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} intervals",
                labels.len(),
                intervals.len()
            )));
        }
        for (i, iv) in intervals.iter().enumerate() {
            if iv.is_empty() {
                return Err(Error::InvalidInput(format!("interval {} ({}) is empty", i, labels[i])));
            }
            if let Some(v) = iv.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "interval {} ({}) contains a non-finite value {v}",
                    i, labels[i]
                )));
            }
        }
        Ok(Self { intervals, labels })
    }

    /// Intervals labelled `1..=k`.
    pub fn unlabelled(intervals: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=intervals.len()).map(|i| i.to_string()).collect();
        Self::new(intervals, labels)
    }

    pub fn single(y: Vec<f64>) -> Result<Self> {
        Self::unlabelled(vec![y])
    }

    pub fn k(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Vec<f64>] {
        &self.intervals
    }

    pub fn interval(&self, i: usize) -> &[f64] {
        &self.intervals[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.intervals.iter().map(Vec::len).collect()
    }

    pub fn total_len(&self) -> usize {
        self.intervals.iter().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.intervals.iter().flatten().copied().collect()
    }

    /// All observations as one interval.
    pub fn pooled(&self) -> IntervalSeries {
        IntervalSeries { intervals: vec![self.flatten()], labels: vec!["pooled".into()] }
    }

    /// Intervals `range` as a new series.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<IntervalSeries> {
        IntervalSeries::new(self.intervals[range.clone()].to_vec(), self.labels[range].to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightProvenance {
    Estimated,
    Predicted,
    Truth,
}

/// Per-interval Gaussian weights `alpha_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSeries {
    pub values: Vec<f64>,
    pub provenance: WeightProvenance,
}

/// Flags raised while fitting. None of them abort the fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Gaussian scale hit the collapse floor at least once.
    pub sigma_floor_hit: bool,
    /// Steps where the Gaussian component had no effective mass and was frozen.
    pub gaussian_frozen_steps: usize,
    /// Steps where the Cauchy component had no effective mass and was frozen.
    pub cauchy_frozen_steps: usize,
    /// Cauchy sub-solver returns that stopped at the iteration limit.
    pub newton_unconverged: usize,
    /// Cauchy sub-solver calls that needed the golden-section fallback.
    pub newton_fallbacks: usize,
    pub beta_clamped: bool,
    /// Some logistic weight is within `SATURATION_TOL` of 0 or 1, so the
    /// coefficients are not identified along the separating direction.
    #[serde(default)]
    pub weights_saturated: bool,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }
}

/// Standard errors keyed by parameter name. `None` marks a parameter whose
/// direction was not negative definite in the observed information.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrors {
    pub names: Vec<String>,
    pub values: Vec<Option<f64>>,
    pub definite: bool,
}

impl StdErrors {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).and_then(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P> {
    pub params: P,
    /// Fitted Gaussian weight for each interval.
    pub weights: Vec<f64>,
    /// Objective after each iteration; entry 0 is the starting value.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Gaussian responsibilities at the returned parameters, by interval.
    pub responsibilities: Vec<Vec<f64>>,
    pub std_errors: Option<StdErrors>,
    pub diagnostics: Diagnostics,
}

/// Parameter records that carry one Gaussian and one Cauchy component shared
/// by all intervals of the fit.
pub trait HasComponents {
    fn gaussian(&self) -> GaussianParams;
    fn cauchy(&self) -> CauchyParams;
}

impl HasComponents for MixtureParams {
    fn gaussian(&self) -> GaussianParams {
        self.gaussian
    }
    fn cauchy(&self) -> CauchyParams {
        self.cauchy
    }
}

impl<P: HasComponents> FitResult<P> {
    /// The fitted mixture in each interval.
    pub fn interval_mixtures(&self) -> Vec<MixtureParams> {
        let (g, c) = (self.params.gaussian(), self.params.cauchy());
        self.weights
            .iter()
            .map(|&alpha| MixtureParams { gaussian: g, cauchy: c, alpha })
            .collect()
    }
}

/// `sum_ij log(alpha_i f_g(y_ij) + (1 - alpha_i) f_c(y_ij))` for per-interval
/// mixtures.
pub fn observed_loglik(series: &IntervalSeries, mixtures: &[MixtureParams]) -> Result<f64> {
    if mixtures.len() != series.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} mixtures for {} intervals",
            mixtures.len(),
            series.k()
        )));
    }
    for m in mixtures {
        m.validate()?;
    }
    Ok(loglik_unchecked(series, mixtures))
}

pub(crate) fn loglik_unchecked(series: &IntervalSeries, mixtures: &[MixtureParams]) -> f64 {
    series
        .intervals()
        .iter()
        .zip(mixtures)
        .map(|(iv, m)| iv.iter().map(|&y| m.ln_pdf(y)).sum::<f64>())
        .sum()
}
