//! Model 4: logistic weights with an AR(1) disturbance,
//! `alpha_i = logistic(x_i . beta + e_i)`, `e_i = phi e_{i-1} + a_i`.
//!
//! The weights are latent. [`mcem_fit`] alternates a Metropolis-within-Gibbs
//! sampler for `alpha | y` at the current parameters with an M-step on the
//! Monte Carlo average of the expected complete-data log-likelihood.
//!
//! The sampler walks on `u_i = logit(alpha_i)` with a symmetric Gaussian
//! proposal. The conditional of `alpha_i` carries a `1 / (alpha_i (1 -
//! alpha_i))` Jacobian; expressed in `u_i` that factor cancels, so
//! acceptance ratios are taken from the logit-space density.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{CauchyParams, GaussianParams, MixtureParams};
use crate::em::{init_estimates, m_step_components, Components, EmConfig, ScaleFloors};
use crate::error::{Error, Result};
use crate::logistic::{fit_model3, logistic, logit, softplus, ExogenousMatrix, LogisticMixtureParams};
use crate::model::{Diagnostics, FitResult, HasComponents, IntervalSeries};
use crate::rng::{stream_id, stream_rng};
use crate::stats::log_add_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Bound on `|phi|` enforced by the M-step reparameterization.
pub const PHI_BOUND: f64 = 0.999;
const MIN_SIGMA_A: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    pub phi: f64,
    pub sigma_a: f64,
}

impl Ar1Params {
    pub fn new(phi: f64, sigma_a: f64) -> Result<Self> {
        let p = Self { phi, sigma_a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::NonStationary(self.phi));
        }
        if !(self.sigma_a > 0.0 && self.sigma_a.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma_a must be > 0, got {}", self.sigma_a)));
        }
        Ok(())
    }

    /// Stationary variance `sigma_a^2 / (1 - phi^2)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma_a * self.sigma_a / (1.0 - self.phi * self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model4Params {
    pub gaussian: GaussianParams,
    pub cauchy: CauchyParams,
    pub beta: Vec<f64>,
    pub ar1: Ar1Params,
}

impl HasComponents for Model4Params {
    fn gaussian(&self) -> GaussianParams {
        self.gaussian
    }
    fn cauchy(&self) -> CauchyParams {
        self.cauchy
    }
}

impl Model4Params {
    fn validate(&self, x: &ExogenousMatrix) -> Result<()> {
        self.gaussian.validate()?;
        self.cauchy.validate()?;
        self.ar1.validate()?;
        if self.beta.len() != x.dim() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries, design has {}",
                self.beta.len(),
                x.dim()
            )));
        }
        Ok(())
    }

    /// `(mu, sigma, theta, delta, beta.., phi, sigma_a)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.gaussian.mu, self.gaussian.sigma, self.cauchy.theta, self.cauchy.delta];
        v.extend_from_slice(&self.beta);
        v.push(self.ar1.phi);
        v.push(self.ar1.sigma_a);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        let n = v.len();
        Self {
            gaussian: GaussianParams { mu: v[0], sigma: v[1] },
            cauchy: CauchyParams { theta: v[2], delta: v[3] },
            beta: v[4..n - 2].to_vec(),
            ar1: Ar1Params { phi: v[n - 2], sigma_a: v[n - 1] },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McemConfig {
    /// Total sweeps per chain, burn-in included.
    pub chain_length: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Random-walk standard deviation on the logit scale.
    pub proposal_sd: f64,
    /// Maximum MCEM iterations.
    pub em_iters: usize,
    pub stabilization_window: usize,
    pub stabilization_tol: f64,
    /// Settings for the Cauchy sub-solver and weight clamp.
    pub em: EmConfig,
    /// Hold the AR(1) parameters fixed instead of estimating them.
    pub fixed_ar1: Option<Ar1Params>,
}

impl Default for McemConfig {
    fn default() -> Self {
        Self {
            chain_length: 2000,
            burn_in: 500,
            thin: 5,
            proposal_sd: 0.5,
            em_iters: 100,
            stabilization_window: 5,
            stabilization_tol: 1e-3,
            em: EmConfig::default(),
            fixed_ar1: None,
        }
    }
}

impl McemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.chain_length {
            return Err(Error::InvalidInput("burn_in must be < chain_length".into()));
        }
        if self.thin == 0 || self.em_iters == 0 || self.stabilization_window == 0 {
            return Err(Error::InvalidInput("thin, em_iters and stabilization_window must be >= 1".into()));
        }
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(Error::InvalidInput("proposal_sd must be positive".into()));
        }
        if !(self.stabilization_tol > 0.0) {
            return Err(Error::InvalidInput("stabilization_tol must be positive".into()));
        }
        if let Some(a) = self.fixed_ar1 {
            a.validate()?;
        }
        self.em.validate()
    }
}

/// Stationary AR(1) covariance, `phi^|i-j| sigma_a^2 / (1 - phi^2)`.
pub fn ar1_covariance(ar1: &Ar1Params, k: usize) -> Result<DMatrix<f64>> {
    ar1.validate()?;
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let v = ar1.stationary_variance();
    Ok(DMatrix::from_fn(k, k, |i, j| ar1.phi.powi(i.abs_diff(j) as i32) * v))
}

/// Tridiagonal AR(1) precision as `(diagonal, off-diagonal)`, both already
/// divided by `sigma_a^2`.
pub fn ar1_precision_bands(ar1: &Ar1Params, k: usize) -> (Vec<f64>, f64) {
    let s2 = ar1.sigma_a * ar1.sigma_a;
    let phi = ar1.phi;
    let diag = (0..k)
        .map(|i| {
            if k == 1 {
                1.0 - phi * phi
            } else if i == 0 || i == k - 1 {
                1.0
            } else {
                1.0 + phi * phi
            }
        })
        .map(|d| d / s2)
        .collect();
    (diag, -phi / s2)
}

/// `v' R v` with `R` the unscaled AR(1) precision (`sigma_a = 1`).
fn ar1_quadratic(v: &[f64], phi: f64) -> f64 {
    let k = v.len();
    if k == 1 {
        return (1.0 - phi * phi) * v[0] * v[0];
    }
    let mut q = (1.0 - phi * phi) * v[0] * v[0];
    for t in 1..k {
        let d = v[t] - phi * v[t - 1];
        q += d * d;
    }
    q
}

/// Log-density of the weight vector: the Gaussian density of
/// `u = logit(alpha)` under `N(X beta, Sigma)` with the change-of-variables
/// term `-sum log(alpha_i (1 - alpha_i))`. Evaluated through a dense
/// Cholesky factor of `Sigma`.
pub fn log_prior_alpha(alpha: &[f64], x: &ExogenousMatrix, params: &Model4Params) -> Result<f64> {
    params.validate(x)?;
    let k = alpha.len();
    if k != x.k() {
        return Err(Error::DimensionMismatch(format!("{k} weights for {} predictor rows", x.k())));
    }
    if alpha.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
        return Ok(f64::NEG_INFINITY);
    }
    let sigma = ar1_covariance(&params.ar1, k)?;
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Numerical("AR(1) covariance is not positive definite".into()))?;
    let mean = x.linear_predictor(&params.beta)?;
    let v = DVector::from_iterator(k, alpha.iter().zip(&mean).map(|(&a, m)| logit(a) - m));
    let w = chol.l().solve_lower_triangular(&v).expect("triangular factor is invertible");
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let jac: f64 = alpha.iter().map(|a| (a * (1.0 - a)).ln()).sum();
    Ok(-0.5 * k as f64 * LN_2PI - 0.5 * log_det - 0.5 * w.norm_squared() - jac)
}

/// Per-observation component log-densities, fixed while a chain runs.
struct Cache {
    ln_g: Vec<Vec<f64>>,
    ln_c: Vec<Vec<f64>>,
}

impl Cache {
    fn new(series: &IntervalSeries, g: &GaussianParams, c: &CauchyParams) -> Self {
        Self {
            ln_g: series.intervals().iter().map(|iv| iv.iter().map(|&y| g.ln_pdf(y)).collect()).collect(),
            ln_c: series.intervals().iter().map(|iv| iv.iter().map(|&y| c.ln_pdf(y)).collect()).collect(),
        }
    }

    /// `sum_j log(alpha f_g + (1 - alpha) f_c)` for interval `i` at `u = logit(alpha)`.
    fn interval_loglik(&self, i: usize, u: f64) -> f64 {
        let ln_a = -softplus(-u);
        let ln_1a = -softplus(u);
        self.ln_g[i]
            .iter()
            .zip(&self.ln_c[i])
            .map(|(g, c)| log_add_exp(ln_a + g, ln_1a + c))
            .sum()
    }
}

/// The part of `-(1/2) v' Q v` that involves `v_i`.
fn conditional_quadratic(i: usize, v: &[f64], diag: &[f64], off: f64) -> f64 {
    let mut nb = 0.0;
    if i > 0 {
        nb += v[i - 1];
    }
    if i + 1 < v.len() {
        nb += v[i + 1];
    }
    -(0.5 * diag[i] * v[i] * v[i] + off * v[i] * nb)
}

fn check_state(series: &IntervalSeries, x: &ExogenousMatrix, params: &Model4Params) -> Result<()> {
    params.validate(x)?;
    if x.k() != series.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictor rows for {} intervals",
            x.k(),
            series.k()
        )));
    }
    Ok(())
}

/// Unnormalized log full conditional of `alpha_i` given the other weights:
/// `log g_i` plus the terms of the AR(1) quadratic form that involve
/// coordinate `i`.
pub fn gibbs_conditional_logdensity(
    i: usize,
    alpha: &[f64],
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    params: &Model4Params,
) -> Result<f64> {
    check_state(series, x, params)?;
    let k = series.k();
    if alpha.len() != k || i >= k {
        return Err(Error::DimensionMismatch(format!("index {i} / {} weights for {k} intervals", alpha.len())));
    }
    let a = alpha[i];
    if !(a > 0.0 && a < 1.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mean = x.linear_predictor(&params.beta)?;
    let v: Vec<f64> = alpha.iter().zip(&mean).map(|(&a, m)| logit(a) - m).collect();
    let (diag, off) = ar1_precision_bands(&params.ar1, k);
    let mix = MixtureParams { gaussian: params.gaussian, cauchy: params.cauchy, alpha: a };
    let ln_g: f64 = series.interval(i).iter().map(|&y| mix.ln_pdf(y)).sum::<f64>() - (a * (1.0 - a)).ln();
    Ok(ln_g + conditional_quadratic(i, &v, &diag, off))
}

/// Kept sweeps of a Metropolis-within-Gibbs run.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Weight vectors after burn-in and thinning.
    pub samples: Vec<Vec<f64>>,
    /// Whether each coordinate's proposal was accepted in the kept sweep.
    pub accepted: Vec<Vec<bool>>,
    /// Sweep index of each kept sample.
    pub sweep: Vec<usize>,
    /// Acceptance rate per coordinate over all sweeps, burn-in included.
    pub acceptance_rate: Vec<f64>,
    pub proposal_sd: f64,
    pub warnings: Vec<String>,
}

impl Chain {
    pub fn posterior_mean(&self) -> Vec<f64> {
        let k = self.samples.first().map_or(0, Vec::len);
        let m = self.samples.len() as f64;
        (0..k).map(|i| self.samples.iter().map(|s| s[i]).sum::<f64>() / m).collect()
    }

    /// Writes `sweep,coordinate,value,accepted` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let io = |e: csv::Error| Error::Data(e.to_string());
        wr.write_record(["sweep", "coordinate", "value", "accepted"]).map_err(io)?;
        for ((s, a), sweep) in self.samples.iter().zip(&self.accepted).zip(&self.sweep) {
            for (j, (v, acc)) in s.iter().zip(a).enumerate() {
                wr.write_record([sweep.to_string(), (j + 1).to_string(), format!("{v:.15e}"), u8::from(*acc).to_string()])
                    .map_err(io)?;
            }
        }
        wr.flush().map_err(|e| Error::Data(e.to_string()))
    }
}

fn run_chain<R: Rng>(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    params: &Model4Params,
    cfg: &McemConfig,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<(Chain, Vec<usize>)> {
    let k = series.k();
    let cache = Cache::new(series, &params.gaussian, &params.cauchy);
    let mean = x.linear_predictor(&params.beta)?;
    let (diag, off) = ar1_precision_bands(&params.ar1, k);

    let mut u: Vec<f64> = (0..k).map(|_| logit(rng.sample::<f64, _>(Open01))).collect();
    let mut v: Vec<f64> = u.iter().zip(&mean).map(|(u, m)| u - m).collect();
    let mut lik: Vec<f64> = (0..k).map(|i| cache.interval_loglik(i, u[i])).collect();

    let mut accepts = vec![0usize; k];
    let mut chain = Chain {
        samples: Vec::new(),
        accepted: Vec::new(),
        sweep: Vec::new(),
        acceptance_rate: Vec::new(),
        proposal_sd,
        warnings: Vec::new(),
    };
    let mut flags = vec![false; k];
    for sweep in 0..cfg.chain_length {
        for j in 0..k {
            let z: f64 = rng.sample(StandardNormal);
            let u_new = u[j] + proposal_sd * z;
            let lik_new = cache.interval_loglik(j, u_new);
            let cur = lik[j] + conditional_quadratic(j, &v, &diag, off);
            let old_v = v[j];
            v[j] = u_new - mean[j];
            let prop = lik_new + conditional_quadratic(j, &v, &diag, off);
            let log_rho = prop - cur;
            let draw: f64 = rng.random();
            let ok = log_rho >= 0.0 || draw.ln() < log_rho;
            if ok {
                u[j] = u_new;
                lik[j] = lik_new;
                accepts[j] += 1;
            } else {
                v[j] = old_v;
            }
            flags[j] = ok;
        }
        if sweep >= cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0 {
            chain.samples.push(u.iter().map(|&u| logistic(u)).collect());
            chain.accepted.push(flags.clone());
            chain.sweep.push(sweep);
        }
    }
    chain.acceptance_rate = accepts.iter().map(|&a| a as f64 / cfg.chain_length as f64).collect();
    Ok((chain, accepts))
}

/// Coordinate-wise random-walk Metropolis on `logit(alpha)`, sweeping
/// `j = 1..k` in order. The chain starts from i.i.d. uniform weights.
///
/// A coordinate that never accepts triggers one retry with half the
/// proposal scale on a separate stream; a second failure is an error.
pub fn metropolis_within_gibbs(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    params: &Model4Params,
    cfg: &McemConfig,
    seed: u64,
) -> Result<Chain> {
    sample_chain(series, x, params, cfg, seed, 0)
}

fn sample_chain(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    params: &Model4Params,
    cfg: &McemConfig,
    seed: u64,
    index: u64,
) -> Result<Chain> {
    cfg.validate()?;
    check_state(series, x, params)?;
    let mut rng = stream_rng(seed, stream_id(index, 1));
    let (mut chain, accepts) = run_chain(series, x, params, cfg, cfg.proposal_sd, &mut rng)?;
    if accepts.iter().any(|&a| a == 0) {
        let mut rng = stream_rng(seed, stream_id(index, 2));
        let sd = 0.5 * cfg.proposal_sd;
        let (retry, accepts) = run_chain(series, x, params, cfg, sd, &mut rng)?;
        if let Some(j) = accepts.iter().position(|&a| a == 0) {
            return Err(Error::SamplerDegenerate(format!(
                "coordinate {} rejected every proposal at proposal_sd {} and {}",
                j + 1,
                cfg.proposal_sd,
                sd
            )));
        }
        chain = retry;
        chain.warnings.push(format!("proposal_sd reduced to {sd} after a coordinate rejected every proposal"));
    }
    let (lo, hi) = chain
        .acceptance_rate
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if lo < 0.1 || hi > 0.6 {
        chain.warnings.push(format!(
            "acceptance rates span [{lo:.3}, {hi:.3}], outside the [0.1, 0.6] target"
        ));
    }
    Ok(chain)
}

/// Mean Gaussian responsibilities over the chain, by interval.
fn averaged_responsibilities(series: &IntervalSeries, chain: &Chain, params: &Model4Params) -> Vec<Vec<f64>> {
    let m = chain.samples.len() as f64;
    series
        .intervals()
        .iter()
        .enumerate()
        .map(|(i, iv)| {
            let mut acc = vec![0.0; iv.len()];
            for s in &chain.samples {
                let mix = MixtureParams { gaussian: params.gaussian, cauchy: params.cauchy, alpha: s[i] };
                for (a, &y) in acc.iter_mut().zip(iv) {
                    *a += mix.responsibility(y);
                }
            }
            acc.iter_mut().for_each(|a| *a /= m);
            acc
        })
        .collect()
}

/// Design matrix with the intercept column materialized.
fn design(x: &ExogenousMatrix) -> DMatrix<f64> {
    let d = x.dim();
    let off = usize::from(x.has_intercept());
    DMatrix::from_fn(x.k(), d, |i, j| if j < off { 1.0 } else { x.rows()[i][j - off] })
}

/// `R v` for the unscaled tridiagonal AR(1) precision.
fn apply_precision(v: &DVector<f64>, phi: f64) -> DVector<f64> {
    let k = v.len();
    let (diag, off) = ar1_precision_bands(&Ar1Params { phi, sigma_a: 1.0 }, k);
    DVector::from_fn(k, |i, _| {
        let mut s = diag[i] * v[i];
        if i > 0 {
            s += off * v[i - 1];
        }
        if i + 1 < k {
            s += off * v[i + 1];
        }
        s
    })
}

/// Generalized least squares `beta` for fixed `phi` given the mean logit draw.
fn gls_beta(xd: &DMatrix<f64>, u_bar: &DVector<f64>, phi: f64) -> Result<DVector<f64>> {
    let d = xd.ncols();
    let mut rx = DMatrix::zeros(xd.nrows(), d);
    for c in 0..d {
        rx.set_column(c, &apply_precision(&xd.column(c).into_owned(), phi));
    }
    let lhs = xd.transpose() * &rx;
    let rhs = rx.transpose() * u_bar;
    lhs.cholesky()
        .map(|ch| ch.solve(&rhs))
        .ok_or_else(|| Error::Numerical("GLS normal equations are singular".into()))
}

struct Ar1Step {
    beta: Vec<f64>,
    ar1: Ar1Params,
}

/// M-step for `(beta, phi, sigma_a)` from logit draws: `beta` by GLS,
/// `sigma_a^2` in closed form, and `phi = 0.999 tanh(eta)` by golden-section
/// search on the profile likelihood.
fn ar1_m_step(u: &[Vec<f64>], x: &ExogenousMatrix, fixed: Option<Ar1Params>) -> Result<Ar1Step> {
    let k = x.k();
    let m = u.len() as f64;
    let xd = design(x);
    let u_bar = DVector::from_fn(k, |i, _| u.iter().map(|s| s[i]).sum::<f64>() / m);
    let mean_quad = |beta: &DVector<f64>, phi: f64| -> f64 {
        let fitted = &xd * beta;
        u.iter()
            .map(|s| {
                let v: Vec<f64> = s.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
                ar1_quadratic(&v, phi)
            })
            .sum::<f64>()
            / m
    };
    if let Some(ar1) = fixed {
        let beta = gls_beta(&xd, &u_bar, ar1.phi)?;
        return Ok(Ar1Step { beta: beta.iter().copied().collect(), ar1 });
    }
    let profile = |eta: f64| -> f64 {
        let phi = PHI_BOUND * eta.tanh();
        match gls_beta(&xd, &u_bar, phi) {
            Ok(beta) => {
                let s = mean_quad(&beta, phi).max(f64::MIN_POSITIVE);
                -0.5 * k as f64 * (s / k as f64).ln() + 0.5 * (1.0 - phi * phi).ln()
            }
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let eta = golden_max(profile, -6.0, 6.0, 90);
    let phi = PHI_BOUND * eta.tanh();
    let beta = gls_beta(&xd, &u_bar, phi)?;
    let sigma_a = (mean_quad(&beta, phi) / k as f64).sqrt().max(MIN_SIGMA_A);
    Ok(Ar1Step { beta: beta.iter().copied().collect(), ar1: Ar1Params { phi, sigma_a } })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        c
    } else {
        d
    }
}

/// Monte Carlo estimate of the expected complete-data log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McObjective {
    pub mean: f64,
    /// Naive standard error of the mean over kept samples.
    pub std_error: f64,
}

/// `(1/M) sum_m E(L | alpha_m, y, current)` evaluated at `candidate`, with
/// responsibilities taken at `current`.
pub fn mc_objective(
    chain: &Chain,
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    current: &Model4Params,
    candidate: &Model4Params,
) -> Result<McObjective> {
    check_state(series, x, current)?;
    check_state(series, x, candidate)?;
    let vals: Vec<f64> = chain
        .samples
        .iter()
        .map(|s| {
            let mut total = log_prior_alpha(s, x, candidate)?;
            for (i, iv) in series.intervals().iter().enumerate() {
                let mix = MixtureParams { gaussian: current.gaussian, cauchy: current.cauchy, alpha: s[i] };
                let (la, l1a) = (s[i].ln(), (1.0 - s[i]).ln());
                for &y in iv {
                    let p = mix.responsibility(y);
                    total += p * (la + candidate.gaussian.ln_pdf(y)) + (1.0 - p) * (l1a + candidate.cauchy.ln_pdf(y));
                }
            }
            Ok(total)
        })
        .collect::<Result<_>>()?;
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(McObjective { mean, std_error: (var / m).sqrt() })
}

/// Monte Carlo EM for Model 4.
///
/// Each iteration samples `alpha | y` at the current parameters, then
/// updates `(mu, sigma)` in closed form and `(theta, delta)` by Newton from
/// chain-averaged responsibilities, and `(beta, phi, sigma_a)` from the
/// logit draws. Converges when the running mean of the parameter vector
/// over `stabilization_window` iterations moves less than
/// `stabilization_tol`; the running mean is returned.
///
/// `loglik_trace` holds the Monte Carlo expected complete-data
/// log-likelihood per iteration, not the observed-data log-likelihood.
pub fn mcem_fit(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    cfg: &McemConfig,
    seed: u64,
) -> Result<FitResult<Model4Params>> {
    cfg.validate()?;
    if series.k() < 3 {
        return Err(Error::TooFewObservations { needed: 3, got: series.k() });
    }
    if x.k() != series.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictor rows for {} intervals",
            x.k(),
            series.k()
        )));
    }
    let y = series.flatten();
    let init = init_estimates(&y)?;
    let floors = ScaleFloors::from_data(&y);
    let mut params = Model4Params {
        gaussian: init.gaussian,
        cauchy: init.cauchy,
        beta: vec![0.0; x.dim()],
        ar1: cfg.fixed_ar1.unwrap_or(Ar1Params { phi: 0.5, sigma_a: 1.0 }),
    };
    let mut diag = Diagnostics::default();
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let w = cfg.stabilization_window;
    let running_mean = |h: &[Vec<f64>]| -> Vec<f64> {
        let n = h.len() as f64;
        (0..h[0].len()).map(|c| h.iter().map(|v| v[c]).sum::<f64>() / n).collect()
    };

    let mut iterations = 0;
    while iterations < cfg.em_iters {
        let chain = sample_chain(series, x, &params, cfg, seed, iterations as u64)?;
        for msg in &chain.warnings {
            diag.warn(format!("MCEM iteration {}: {msg}", iterations + 1));
        }
        let resp = averaged_responsibilities(series, &chain, &params);
        let p: Vec<f64> = resp.iter().flatten().copied().collect();
        let comps = Components { gaussian: params.gaussian, cauchy: params.cauchy };
        let next = m_step_components(&y, &p, &comps, &cfg.em, floors, &mut diag)?;
        let u: Vec<Vec<f64>> = chain.samples.iter().map(|s| s.iter().map(|&a| logit(a)).collect()).collect();
        let step = ar1_m_step(&u, x, cfg.fixed_ar1)?;
        let candidate = Model4Params { gaussian: next.gaussian, cauchy: next.cauchy, beta: step.beta, ar1: step.ar1 };
        trace.push(mc_objective(&chain, series, x, &params, &candidate)?.mean);
        params = candidate;
        history.push(params.to_vec());
        iterations += 1;

        if history.len() > w {
            let n = history.len();
            let now = running_mean(&history[n - w..]);
            let before = running_mean(&history[n - w - 1..n - 1]);
            let moved = now.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if moved < cfg.stabilization_tol {
                converged = true;
                break;
            }
        }
    }

    let tail = &history[history.len().saturating_sub(w)..];
    let mut final_params = Model4Params::from_vec(&running_mean(tail));
    if let Some(a) = cfg.fixed_ar1 {
        final_params.ar1 = a;
    }
    final_params.ar1.phi = final_params.ar1.phi.clamp(-PHI_BOUND, PHI_BOUND);

    let chain = sample_chain(series, x, &final_params, cfg, seed, cfg.em_iters as u64 + 1)?;
    let weights = chain.posterior_mean();
    let responsibilities = averaged_responsibilities(series, &chain, &final_params);
    Ok(FitResult {
        params: final_params,
        weights,
        loglik_trace: trace,
        iterations,
        converged,
        responsibilities,
        std_errors: None,
        diagnostics: diag,
    })
}

/// Model-3 refit of data that may carry temporal correlation in the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessReport {
    pub fit: FitResult<LogisticMixtureParams>,
    /// Mean squared error of the fitted weights against ground truth, when
    /// ground truth was supplied.
    pub weight_mse: Option<f64>,
}

pub fn model3_robustness_check(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    truth: Option<&[f64]>,
    cfg: &EmConfig,
) -> Result<RobustnessReport> {
    let fit = fit_model3(series, x, cfg)?;
    let weight_mse = match truth {
        Some(t) if t.len() != fit.weights.len() => {
            return Err(Error::DimensionMismatch(format!(
                "{} true weights for {} intervals",
                t.len(),
                fit.weights.len()
            )))
        }
        Some(t) => Some(
            fit.weights.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / t.len() as f64,
        ),
        None => None,
    };
    Ok(RobustnessReport { fit, weight_mse })
}
