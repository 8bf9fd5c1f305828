//! Gaussian, Cauchy and two-component Gaussian-Cauchy mixture primitives.
//!
//! The checked free functions (`gaussian_pdf`, `mixture_cdf`, ...) validate
//! their inputs and are the public entry points. The `ln_pdf` style methods
//! on the parameter types skip validation and are what the fitting loops
//! call.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Cauchy, Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{ensure_finite, Error, Result};
use crate::rng::stream_rng;
use crate::stats::log_add_exp;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const LN_PI: f64 = 1.144_729_885_849_400_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyParams {
    pub theta: f64,
    pub delta: f64,
}

/// Weight `alpha` belongs to the Gaussian component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub gaussian: GaussianParams,
    pub cauchy: CauchyParams,
    pub alpha: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("mu", self.mu)?;
        ensure_finite("sigma", self.sigma)?;
        if self.sigma <= 0.0 {
            return Err(Error::InvalidInput(format!("sigma must be > 0, got {}", self.sigma)));
        }
        Ok(())
    }

    #[inline]
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let z = (y - self.mu) / self.sigma;
        -LN_SQRT_2PI - self.sigma.ln() - 0.5 * z * z
    }

    #[inline]
    pub fn cdf(&self, y: f64) -> f64 {
        0.5 * erfc(-(y - self.mu) / (self.sigma * std::f64::consts::SQRT_2))
    }

    pub fn quantile(&self, q: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal as StdNormal};
        let n = StdNormal::new(0.0, 1.0).expect("standard normal");
        self.mu + self.sigma * n.inverse_cdf(q)
    }
}

impl CauchyParams {
    pub fn new(theta: f64, delta: f64) -> Result<Self> {
        let p = Self { theta, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("theta", self.theta)?;
        ensure_finite("delta", self.delta)?;
        if self.delta <= 0.0 {
            return Err(Error::InvalidInput(format!("delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }

    #[inline]
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let z = (y - self.theta) / self.delta;
        if z.abs() < 1e150 {
            -LN_PI - self.delta.ln() - z.mul_add(z, 1.0).ln()
        } else {
            // z^2 would overflow; 1 + z^2 == z^2 at this magnitude
            let ln_abs_z = (y - self.theta).abs().ln() - self.delta.ln();
            -LN_PI - self.delta.ln() - 2.0 * ln_abs_z
        }
    }

    #[inline]
    pub fn cdf(&self, y: f64) -> f64 {
        0.5 + ((y - self.theta) / self.delta).atan() / PI
    }

    pub fn quantile(&self, q: f64) -> f64 {
        self.theta + self.delta * (PI * (q - 0.5)).tan()
    }
}

impl MixtureParams {
    pub fn new(gaussian: GaussianParams, cauchy: CauchyParams, alpha: f64) -> Result<Self> {
        let p = Self { gaussian, cauchy, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.gaussian.validate()?;
        self.cauchy.validate()?;
        ensure_finite("alpha", self.alpha)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }

    /// The two weighted component log-densities `(ln a f_g, ln (1-a) f_c)`.
    #[inline]
    pub fn weighted_ln_components(&self, y: f64) -> (f64, f64) {
        (
            self.alpha.ln() + self.gaussian.ln_pdf(y),
            (1.0 - self.alpha).ln() + self.cauchy.ln_pdf(y),
        )
    }

    #[inline]
    pub fn ln_pdf(&self, y: f64) -> f64 {
        let (g, c) = self.weighted_ln_components(y);
        log_add_exp(g, c)
    }

    /// Posterior probability that `y` came from the Gaussian component.
    #[inline]
    pub fn responsibility(&self, y: f64) -> f64 {
        let (g, c) = self.weighted_ln_components(y);
        if g == f64::NEG_INFINITY {
            return 0.0;
        }
        if c == f64::NEG_INFINITY {
            return 1.0;
        }
        // logistic(g - c), stable for either sign
        let d = g - c;
        if d >= 0.0 {
            1.0 / (1.0 + (-d).exp())
        } else {
            let e = d.exp();
            e / (1.0 + e)
        }
    }

    #[inline]
    pub fn cdf(&self, y: f64) -> f64 {
        self.alpha * self.gaussian.cdf(y) + (1.0 - self.alpha) * self.cauchy.cdf(y)
    }
}

fn check_y(y: f64) -> Result<()> {
    ensure_finite("y", y)
}

pub fn gaussian_pdf(y: f64, p: &GaussianParams) -> Result<f64> {
    check_y(y)?;
    p.validate()?;
    Ok(p.ln_pdf(y).exp())
}

pub fn gaussian_ln_pdf(y: f64, p: &GaussianParams) -> Result<f64> {
    check_y(y)?;
    p.validate()?;
    Ok(p.ln_pdf(y))
}

pub fn cauchy_pdf(y: f64, p: &CauchyParams) -> Result<f64> {
    check_y(y)?;
    p.validate()?;
    Ok(p.ln_pdf(y).exp())
}

pub fn cauchy_ln_pdf(y: f64, p: &CauchyParams) -> Result<f64> {
    check_y(y)?;
    p.validate()?;
    Ok(p.ln_pdf(y))
}

pub fn mixture_pdf(y: f64, p: &MixtureParams) -> Result<f64> {
    check_y(y)?;
    p.validate()?;
    Ok(p.ln_pdf(y).exp())
}

pub fn mixture_ln_pdf(y: f64, p: &MixtureParams) -> Result<f64> {
    check_y(y)?;
    p.validate()?;
    Ok(p.ln_pdf(y))
}

/// Mixture CDF. Infinite `y` is accepted and maps to 0 or 1.
pub fn mixture_cdf(y: f64, p: &MixtureParams) -> Result<f64> {
    if y.is_nan() {
        return Err(Error::InvalidInput("y is NaN".into()));
    }
    p.validate()?;
    if y == f64::INFINITY {
        return Ok(1.0);
    }
    if y == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    Ok(p.cdf(y))
}

/// Gaussian-component posterior probabilities, computed in log space.
pub fn responsibilities(y: &[f64], p: &MixtureParams) -> Result<Vec<f64>> {
    p.validate()?;
    y.iter()
        .map(|&v| {
            check_y(v)?;
            Ok(p.responsibility(v))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingScheme {
    /// `round(alpha * n)` Gaussian draws (ties to even), the rest Cauchy, shuffled.
    #[default]
    DeterministicCount,
    /// Component labels drawn i.i.d. Bernoulli(alpha).
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSample {
    pub values: Vec<f64>,
    pub from_gaussian: Vec<bool>,
}

impl LabelledSample {
    pub fn gaussian_count(&self) -> usize {
        self.from_gaussian.iter().filter(|&&g| g).count()
    }
}

/// Number of Gaussian draws in a deterministic-count sample of size `n`.
pub fn gaussian_count(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64).round_ties_even() as usize).min(n)
}

/// Draws `n` labelled mixture variates from `rng`.
pub fn sample_mixture_with<R: Rng + ?Sized>(
    n: usize,
    p: &MixtureParams,
    scheme: SamplingScheme,
    rng: &mut R,
) -> Result<LabelledSample> {
    p.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be >= 1".into()));
    }
    let normal = Normal::new(p.gaussian.mu, p.gaussian.sigma)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let cauchy = Cauchy::new(p.cauchy.theta, p.cauchy.delta)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;

    let mut labels: Vec<bool> = match scheme {
        SamplingScheme::DeterministicCount => {
            let ng = gaussian_count(n, p.alpha);
            let mut l = vec![true; ng];
            l.resize(n, false);
            l.shuffle(rng);
            l
        }
        SamplingScheme::Bernoulli => (0..n).map(|_| rng.random::<f64>() < p.alpha).collect(),
    };
    let values = labels
        .iter()
        .map(|&g| if g { normal.sample(rng) } else { cauchy.sample(rng) })
        .collect();
    labels.shrink_to_fit();
    Ok(LabelledSample { values, from_gaussian: labels })
}

/// Seeded convenience wrapper around [`sample_mixture_with`] (stream 0).
pub fn sample_mixture(
    n: usize,
    p: &MixtureParams,
    seed: u64,
    scheme: SamplingScheme,
) -> Result<LabelledSample> {
    let mut rng = stream_rng(seed, 0);
    sample_mixture_with(n, p, scheme, &mut rng)
}
