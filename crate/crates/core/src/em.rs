//! Exact EM for Model 1 (independent mixtures per interval) and Model 2
//! (shared components, free per-interval weights).
//!
//! Both models run through one engine, [`run_em`], which alternates
//! responsibilities with closed-form Gaussian updates and a Newton solve
//! for the Cauchy location and log-scale. What differs between models is
//! how the per-interval weights are updated, captured by [`WeightUpdate`].
//! Model 3 plugs a logistic weight update into the same engine.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{CauchyParams, GaussianParams, MixtureParams};
use crate::error::{Error, Result};
use crate::model::{loglik_unchecked, Diagnostics, FitResult, HasComponents, IntervalSeries};
use crate::stats::{iqr, median};

/// Minimum observations per interval for Model 1 (five free parameters).
pub const MIN_INTERVAL_OBS: usize = 5;

/// Effective component mass below which a component is frozen for a step.
const MIN_COMPONENT_MASS: f64 = 1e-10;

/// Scale floors are this fraction of the data IQR.
const SCALE_FLOOR_FRACTION: f64 = 1e-8;

const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iter: usize,
    pub loglik_rtol: f64,
    pub param_atol: f64,
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    pub alpha_clamp: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            loglik_rtol: 1e-8,
            param_atol: 1e-6,
            newton_max_iter: 100,
            newton_tol: 1e-10,
            alpha_clamp: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("loglik_rtol", self.loglik_rtol),
            ("param_atol", self.param_atol),
            ("newton_tol", self.newton_tol),
            ("alpha_clamp", self.alpha_clamp),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 || self.newton_max_iter == 0 {
            return Err(Error::InvalidInput("iteration limits must be positive".into()));
        }
        if self.alpha_clamp >= 0.5 {
            return Err(Error::InvalidInput("alpha_clamp must be < 0.5".into()));
        }
        Ok(())
    }

    pub(crate) fn clamp_alpha(&self, a: f64) -> f64 {
        a.clamp(self.alpha_clamp, 1.0 - self.alpha_clamp)
    }
}

/// Starting point: both locations at the median, both scales at the IQR,
/// equal weights.
pub fn init_estimates(y: &[f64]) -> Result<MixtureParams> {
    if y.len() < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: y.len() });
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation {v}")));
    }
    let m = median(y);
    let s = iqr(y);
    if !(s > 0.0) {
        return Err(Error::DegenerateData("interquartile range is zero".into()));
    }
    Ok(MixtureParams {
        gaussian: GaussianParams { mu: m, sigma: s },
        cauchy: CauchyParams { theta: m, delta: s },
        alpha: 0.5,
    })
}

pub(crate) fn scale_floor(y: &[f64]) -> f64 {
    let s = iqr(y);
    if s > 0.0 {
        SCALE_FLOOR_FRACTION * s
    } else {
        f64::MIN_POSITIVE
    }
}

/// Weighted Cauchy term of the expected complete-data log-likelihood,
/// `sum_i w_i (-log delta - log(1 + ((y_i - theta)/delta)^2))`.
pub fn cauchy_objective(y: &[f64], w: &[f64], c: &CauchyParams) -> f64 {
    eval_obj(y, w, c.theta, c.delta.ln())
}

#[inline]
fn eval_obj(y: &[f64], w: &[f64], theta: f64, eta: f64) -> f64 {
    let inv = (-eta).exp();
    let mut s = 0.0;
    let mut sw = 0.0;
    for (&yi, &wi) in y.iter().zip(w) {
        let r = (yi - theta) * inv;
        s -= wi * r.mul_add(r, 1.0).ln();
        sw += wi;
    }
    s - sw * eta
}

/// Gradient and Hessian in `(theta, log delta)`.
fn grad_hess(y: &[f64], w: &[f64], theta: f64, eta: f64) -> ([f64; 2], [[f64; 3]; 1]) {
    let inv = (-eta).exp();
    let (mut gt, mut ge, mut htt, mut hte, mut hee) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&yi, &wi) in y.iter().zip(w) {
        let r = (yi - theta) * inv;
        let r2 = r * r;
        let s = 1.0 + r2;
        let s2 = s * s;
        gt += wi * 2.0 * r / s;
        ge += wi * (2.0 * r2 / s - 1.0);
        htt -= wi * 2.0 * (1.0 - r2) / s2;
        hte -= wi * 4.0 * r / s2;
        hee -= wi * 4.0 * r2 / s2;
    }
    ([gt * inv, ge], [[htt * inv * inv, hte * inv, hee]])
}

/// Result of the Cauchy sub-solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyEstimate {
    pub params: CauchyParams,
    pub converged: bool,
    pub used_fallback: bool,
    pub iterations: usize,
}

/// Maximizes the weighted Cauchy log-likelihood over `(theta, delta)`.
///
/// Newton steps in `(theta, log delta)` with step-halving. When the Hessian
/// is not negative definite the step falls back to a diagonally scaled
/// gradient; when no halving ascends, to coordinate-wise golden-section
/// search. The returned point never scores below `start`.
pub fn newton_cauchy(
    y: &[f64],
    weights: &[f64],
    start: CauchyParams,
    cfg: &EmConfig,
) -> Result<CauchyEstimate> {
    newton_cauchy_floored(y, weights, start, cfg, scale_floor(y))
}

pub(crate) fn newton_cauchy_floored(
    y: &[f64],
    weights: &[f64],
    start: CauchyParams,
    cfg: &EmConfig,
    min_delta: f64,
) -> Result<CauchyEstimate> {
    if y.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observations, {} weights",
            y.len(),
            weights.len()
        )));
    }
    start.validate()?;
    let sw: f64 = weights.iter().sum();
    if !(sw > MIN_COMPONENT_MASS) {
        return Err(Error::DegenerateData(format!(
            "Cauchy weights sum to {sw}; no effective sample"
        )));
    }
    let eta_min = min_delta.ln();
    let mut theta = start.theta;
    let mut eta = start.delta.ln().max(eta_min);
    let mut f = eval_obj(y, weights, theta, eta);
    let grad_tol = cfg.newton_tol * sw.max(1.0);
    let mut converged = false;
    let mut used_fallback = false;
    let mut iterations = 0;

    while iterations < cfg.newton_max_iter {
        iterations += 1;
        let (g, [[htt, hte, hee]]) = grad_hess(y, weights, theta, eta);
        let at_floor = eta <= eta_min && g[1] < 0.0;
        let g_eff = if at_floor { [g[0], 0.0] } else { g };
        let det = htt * hee - hte * hte;
        if g_eff[0].abs().max(g_eff[1].abs()) <= grad_tol {
            converged = true;
            // one last Newton step: inside the quadratic region it lands
            // at working precision, which keeps EM fixed points sharp
            if htt < 0.0 && det > 0.0 && !at_floor {
                let ct = theta + (-hee * g[0] + hte * g[1]) / det;
                let ce = (eta + (hte * g[0] - htt * g[1]) / det).max(eta_min);
                let fc = eval_obj(y, weights, ct, ce);
                if fc >= f {
                    theta = ct;
                    eta = ce;
                }
            }
            break;
        }

        let dir = if htt < 0.0 && det > 0.0 && !at_floor {
            // -H^{-1} g
            [(-hee * g[0] + hte * g[1]) / det, (hte * g[0] - htt * g[1]) / det]
        } else {
            [
                g_eff[0] / htt.abs().max(1e-12 * sw),
                g_eff[1] / hee.abs().max(1e-12 * sw),
            ]
        };

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let ct = theta + step * dir[0];
            let ce = (eta + step * dir[1]).max(eta_min);
            let fc = eval_obj(y, weights, ct, ce);
            if fc > f {
                accepted = Some((ct, ce, fc));
                break;
            }
            step *= 0.5;
        }

        match accepted {
            Some((ct, ce, fc)) => {
                let moved = (ct - theta).abs().max(ce - eta);
                let moved = moved.max((ce - eta).abs());
                theta = ct;
                eta = ce;
                f = fc;
                if moved <= 1e-15 * (1.0 + theta.abs() + eta.abs()) {
                    converged = true;
                    break;
                }
            }
            None => {
                let (ct, ce, fc) = golden_sweep(y, weights, theta, eta, eta_min);
                if fc > f {
                    used_fallback = true;
                    theta = ct;
                    eta = ce;
                    f = fc;
                } else {
                    // No direction improves the objective at working precision.
                    converged = g_eff[0].abs().max(g_eff[1].abs()) <= 1e-6 * sw.max(1.0);
                    break;
                }
            }
        }
    }

    Ok(CauchyEstimate {
        params: CauchyParams { theta, delta: eta.exp() },
        converged,
        used_fallback,
        iterations,
    })
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
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
        (c, fc)
    } else {
        (d, fd)
    }
}

fn golden_sweep(y: &[f64], w: &[f64], theta: f64, eta: f64, eta_min: f64) -> (f64, f64, f64) {
    let mut best = (theta, eta, eval_obj(y, w, theta, eta));
    for _ in 0..3 {
        let (t0, e0, _) = best;
        let span = 10.0 * e0.exp();
        let (t, ft) = golden_max(|t| eval_obj(y, w, t, e0), t0 - span, t0 + span, 80);
        if ft > best.2 {
            best = (t, e0, ft);
        }
        let t1 = best.0;
        let (e, fe) = golden_max(|e| eval_obj(y, w, t1, e), (e0 - 5.0).max(eta_min), e0 + 5.0, 80);
        if fe > best.2 {
            best = (t1, e, fe);
        }
    }
    best
}

/// Per-interval weight update plugged into [`run_em`].
pub(crate) trait WeightUpdate {
    fn weights(&self) -> Vec<f64>;
    /// Updates from Gaussian responsibilities; returns the largest absolute
    /// parameter change.
    fn update(
        &mut self,
        series: &IntervalSeries,
        resp: &[Vec<f64>],
        cfg: &EmConfig,
        diag: &mut Diagnostics,
    ) -> Result<f64>;
}

/// Unconstrained per-interval weights (Models 1 and 2): `alpha_i = mean_j p_ij`.
pub(crate) struct FreeWeights(pub Vec<f64>);

impl WeightUpdate for FreeWeights {
    fn weights(&self) -> Vec<f64> {
        self.0.clone()
    }

    fn update(
        &mut self,
        _series: &IntervalSeries,
        resp: &[Vec<f64>],
        cfg: &EmConfig,
        _diag: &mut Diagnostics,
    ) -> Result<f64> {
        let mut change: f64 = 0.0;
        for (a, p) in self.0.iter_mut().zip(resp) {
            let new = cfg.clamp_alpha(p.iter().sum::<f64>() / p.len() as f64);
            change = change.max((new - *a).abs());
            *a = new;
        }
        Ok(change)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Components {
    pub gaussian: GaussianParams,
    pub cauchy: CauchyParams,
}

pub(crate) struct EmRun {
    pub components: Components,
    pub weights: Vec<f64>,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub responsibilities: Vec<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

pub(crate) fn mixtures_for(c: &Components, weights: &[f64]) -> Vec<MixtureParams> {
    weights
        .iter()
        .map(|&alpha| MixtureParams { gaussian: c.gaussian, cauchy: c.cauchy, alpha })
        .collect()
}

pub(crate) fn e_step(series: &IntervalSeries, mixtures: &[MixtureParams]) -> Vec<Vec<f64>> {
    series
        .intervals()
        .iter()
        .zip(mixtures)
        .map(|(iv, m)| iv.iter().map(|&y| m.responsibility(y)).collect())
        .collect()
}

/// Floors applied to the component scales.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScaleFloors {
    pub sigma: f64,
    pub delta: f64,
}

impl ScaleFloors {
    pub fn from_data(y: &[f64]) -> Self {
        let f = scale_floor(y);
        Self { sigma: f, delta: f }
    }
}

/// Component M-step from flattened observations and responsibilities.
pub(crate) fn m_step_components(
    y: &[f64],
    p: &[f64],
    current: &Components,
    cfg: &EmConfig,
    floors: ScaleFloors,
    diag: &mut Diagnostics,
) -> Result<Components> {
    let sp: f64 = p.iter().sum();
    let gaussian = if sp < MIN_COMPONENT_MASS {
        diag.gaussian_frozen_steps += 1;
        current.gaussian
    } else {
        let mu = y.iter().zip(p).map(|(y, p)| p * y).sum::<f64>() / sp;
        let var = y.iter().zip(p).map(|(y, p)| p * (y - mu) * (y - mu)).sum::<f64>() / sp;
        let mut sigma = var.sqrt();
        if !(sigma >= floors.sigma) {
            sigma = floors.sigma;
            if !diag.sigma_floor_hit {
                diag.sigma_floor_hit = true;
                diag.warn("Gaussian scale reached its collapse floor");
            }
        }
        GaussianParams { mu, sigma }
    };

    let q: Vec<f64> = p.iter().map(|p| 1.0 - p).collect();
    let sq: f64 = q.iter().sum();
    let cauchy = if sq < MIN_COMPONENT_MASS {
        diag.cauchy_frozen_steps += 1;
        current.cauchy
    } else {
        let est = newton_cauchy_floored(y, &q, current.cauchy, cfg, floors.delta)?;
        if !est.converged {
            diag.newton_unconverged += 1;
        }
        if est.used_fallback {
            diag.newton_fallbacks += 1;
        }
        est.params
    };
    Ok(Components { gaussian, cauchy })
}

fn component_change(a: &Components, b: &Components) -> f64 {
    [
        (a.gaussian.mu - b.gaussian.mu).abs(),
        (a.gaussian.sigma - b.gaussian.sigma).abs(),
        (a.cauchy.theta - b.cauchy.theta).abs(),
        (a.cauchy.delta - b.cauchy.delta).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Generalized EM shared by Models 1-3.
///
/// Stops when the relative log-likelihood change is below `loglik_rtol` and
/// the largest parameter change is below `param_atol`, or after `max_iter`
/// iterations.
pub(crate) fn run_em<W: WeightUpdate>(
    series: &IntervalSeries,
    init: Components,
    weights: &mut W,
    cfg: &EmConfig,
    floors: ScaleFloors,
) -> Result<EmRun> {
    cfg.validate()?;
    let y = series.flatten();
    let mut diag = Diagnostics::default();
    let mut comps = init;
    let mut ll = loglik_unchecked(series, &mixtures_for(&comps, &weights.weights()));
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("initial log-likelihood is {ll}")));
    }
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        let resp = e_step(series, &mixtures_for(&comps, &weights.weights()));
        let p: Vec<f64> = resp.iter().flatten().copied().collect();
        let dw = weights.update(series, &resp, cfg, &mut diag)?;
        let next = m_step_components(&y, &p, &comps, cfg, floors, &mut diag)?;
        let dparam = dw.max(component_change(&comps, &next));
        comps = next;
        let ll_new = loglik_unchecked(series, &mixtures_for(&comps, &weights.weights()));
        if !ll_new.is_finite() {
            return Err(Error::Numerical(format!(
                "log-likelihood became {ll_new} at iteration {}",
                iterations + 1
            )));
        }
        iterations += 1;
        trace.push(ll_new);
        let rel = (ll_new - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = ll_new;
        if rel < cfg.loglik_rtol && dparam < cfg.param_atol {
            converged = true;
            break;
        }
    }

    let w = weights.weights();
    let responsibilities = e_step(series, &mixtures_for(&comps, &w));
    Ok(EmRun {
        components: comps,
        weights: w,
        trace,
        iterations,
        converged,
        responsibilities,
        diagnostics: diag,
    })
}

/// One Model-1 EM step on a single interval.
pub fn em_step_model1(y: &[f64], current: &MixtureParams, cfg: &EmConfig) -> Result<MixtureParams> {
    current.validate()?;
    cfg.validate()?;
    let resp: Vec<f64> = y.iter().map(|&v| current.responsibility(v)).collect();
    let alpha = cfg.clamp_alpha(resp.iter().sum::<f64>() / y.len() as f64);
    let comps = Components { gaussian: current.gaussian, cauchy: current.cauchy };
    let mut diag = Diagnostics::default();
    let next = m_step_components(y, &resp, &comps, cfg, ScaleFloors::from_data(y), &mut diag)?;
    Ok(MixtureParams { gaussian: next.gaussian, cauchy: next.cauchy, alpha })
}

/// Model-1 fit of a single interval.
pub fn fit_interval(y: &[f64], cfg: &EmConfig) -> Result<FitResult<MixtureParams>> {
    if y.len() < MIN_INTERVAL_OBS {
        return Err(Error::TooFewObservations { needed: MIN_INTERVAL_OBS, got: y.len() });
    }
    let init = init_estimates(y)?;
    let series = IntervalSeries::single(y.to_vec())?;
    let run = run_em(
        &series,
        Components { gaussian: init.gaussian, cauchy: init.cauchy },
        &mut FreeWeights(vec![init.alpha]),
        cfg,
        ScaleFloors::from_data(y),
    )?;
    Ok(FitResult {
        params: MixtureParams {
            gaussian: run.components.gaussian,
            cauchy: run.components.cauchy,
            alpha: run.weights[0],
        },
        weights: run.weights,
        loglik_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        responsibilities: run.responsibilities,
        std_errors: None,
        diagnostics: run.diagnostics,
    })
}

/// Model 1: an independent five-parameter mixture per interval. A failing
/// interval yields its own error without affecting the others.
pub fn fit_model1(series: &IntervalSeries, cfg: &EmConfig) -> Vec<Result<FitResult<MixtureParams>>> {
    series.intervals().par_iter().map(|iv| fit_interval(iv, cfg)).collect()
}

/// Model-2 parameters: shared components and one weight per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model2Params {
    pub gaussian: GaussianParams,
    pub cauchy: CauchyParams,
    pub alphas: Vec<f64>,
}

impl HasComponents for Model2Params {
    fn gaussian(&self) -> GaussianParams {
        self.gaussian
    }
    fn cauchy(&self) -> CauchyParams {
        self.cauchy
    }
}

impl Model2Params {
    /// Free parameters: four component parameters plus one weight per interval.
    pub fn parameter_count(&self) -> usize {
        self.alphas.len() + 4
    }
}

/// Model 2: constant component parameters, time-varying weights. Seeded by
/// a Model-1 fit of the pooled data.
pub fn fit_model2(series: &IntervalSeries, cfg: &EmConfig) -> Result<FitResult<Model2Params>> {
    if series.k() < 2 {
        return Err(Error::InvalidInput(
            "Model 2 needs at least two intervals; use Model 1 for a single interval".into(),
        ));
    }
    if let Some((i, n)) = series.sizes().into_iter().enumerate().find(|(_, n)| *n < MIN_INTERVAL_OBS) {
        return Err(Error::InvalidInput(format!(
            "interval {} ({}) has {n} observations; at least {MIN_INTERVAL_OBS} required",
            i,
            series.labels()[i]
        )));
    }
    let pooled = fit_interval(&series.flatten(), cfg)?;
    let start = pooled.params;
    let y = series.flatten();
    let mut weights = FreeWeights(vec![start.alpha; series.k()]);
    let mut run = run_em(
        series,
        Components { gaussian: start.gaussian, cauchy: start.cauchy },
        &mut weights,
        cfg,
        ScaleFloors::from_data(&y),
    )?;
    if !pooled.converged {
        run.diagnostics.warn("pooled initialization fit did not converge");
    }
    Ok(FitResult {
        params: Model2Params {
            gaussian: run.components.gaussian,
            cauchy: run.components.cauchy,
            alphas: run.weights.clone(),
        },
        weights: run.weights,
        loglik_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        responsibilities: run.responsibilities,
        std_errors: None,
        diagnostics: run.diagnostics,
    })
}

/// Engine entry used by the pooled-equivalence check: Model-2 updates on a
/// series of any `k`, started from [`init_estimates`] of the pooled data.
#[doc(hidden)]
pub fn run_shared_em_from_init(series: &IntervalSeries, cfg: &EmConfig) -> Result<(Components2, Vec<f64>)> {
    let y = series.flatten();
    let init = init_estimates(&y)?;
    let run = run_em(
        series,
        Components { gaussian: init.gaussian, cauchy: init.cauchy },
        &mut FreeWeights(vec![init.alpha; series.k()]),
        cfg,
        ScaleFloors::from_data(&y),
    )?;
    Ok(((run.components.gaussian, run.components.cauchy), run.trace))
}

#[doc(hidden)]
pub type Components2 = (GaussianParams, CauchyParams);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{sample_mixture, SamplingScheme};
    use crate::model::observed_loglik;

    fn std_mix(alpha: f64) -> MixtureParams {
        MixtureParams {
            gaussian: GaussianParams { mu: 0.0, sigma: 1.0 },
            cauchy: CauchyParams { theta: 0.0, delta: 1.0 },
            alpha,
        }
    }

    #[test]
    fn init_on_symmetric_triple() {
        let p = init_estimates(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.gaussian.mu, 0.0);
        assert_eq!(p.cauchy.theta, 0.0);
        assert_eq!(p.gaussian.sigma, 1.0);
        assert_eq!(p.cauchy.delta, 1.0);
        assert_eq!(p.alpha, 0.5);
        assert!(matches!(init_estimates(&[5.0, 5.0, 5.0]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn init_scale_on_normal_draws() {
        let s = sample_mixture(1000, &std_mix(1.0), 42, SamplingScheme::DeterministicCount).unwrap();
        let p = init_estimates(&s.values).unwrap();
        assert!((1.20..=1.50).contains(&p.gaussian.sigma), "{}", p.gaussian.sigma);
    }

    #[test]
    fn step_with_all_gaussian_weight_gives_sample_moments() {
        let y = [0.3, -1.2, 2.2, 0.9, -0.4, 1.1];
        let cfg = EmConfig::default();
        let next = em_step_model1(&y, &std_mix(1.0), &cfg).unwrap();
        let m = y.iter().sum::<f64>() / 6.0;
        let sd = (y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 6.0).sqrt();
        assert_eq!(next.alpha, 1.0 - cfg.alpha_clamp);
        assert!((next.gaussian.mu - m).abs() < 1e-14);
        assert!((next.gaussian.sigma - sd).abs() < 1e-14);
        // Cauchy component had no mass and is left alone
        assert_eq!(next.cauchy, std_mix(1.0).cauchy);
    }

    #[test]
    fn single_step_increases_loglik() {
        let s = sample_mixture(100, &std_mix(0.9), 42, SamplingScheme::DeterministicCount).unwrap();
        let y = s.values;
        let series = IntervalSeries::single(y.clone()).unwrap();
        let p0 = init_estimates(&y).unwrap();
        let p1 = em_step_model1(&y, &p0, &EmConfig::default()).unwrap();
        let l0 = observed_loglik(&series, &[p0]).unwrap();
        let l1 = observed_loglik(&series, &[p1]).unwrap();
        assert!(l1 > l0, "{l0} -> {l1}");
    }

    #[test]
    fn converged_fit_is_a_fixed_point() {
        let s = sample_mixture(100, &std_mix(0.5), 5, SamplingScheme::DeterministicCount).unwrap();
        let cfg = EmConfig::default();
        let fit = fit_interval(&s.values, &cfg).unwrap();
        assert!(fit.converged);
        let again = em_step_model1(&s.values, &fit.params, &cfg).unwrap();
        let d = [
            again.gaussian.mu - fit.params.gaussian.mu,
            again.gaussian.sigma - fit.params.gaussian.sigma,
            again.cauchy.theta - fit.params.cauchy.theta,
            again.cauchy.delta - fit.params.cauchy.delta,
            again.alpha - fit.params.alpha,
        ];
        assert!(d.iter().all(|v| v.abs() < 10.0 * cfg.param_atol), "{d:?}");
    }

    #[test]
    fn newton_recovers_symmetric_center() {
        let y = [-4.0, -1.5, -0.5, 0.25, 1.75, 2.25, 3.25, 6.0];
        // mirror about c = 1
        let y: Vec<f64> = y.iter().map(|v| 1.0 + (v - 1.0)).chain(y.iter().map(|v| 1.0 - (v - 1.0))).collect();
        let w = vec![1.0; y.len()];
        let est = newton_cauchy(&y, &w, CauchyParams { theta: 0.3, delta: 2.0 }, &EmConfig::default()).unwrap();
        assert!(est.converged);
        assert!((est.params.theta - 1.0).abs() < 1e-9, "{:?}", est.params);
    }

    #[test]
    fn newton_rejects_empty_mass() {
        let y = [1.0, 2.0, 3.0];
        let r = newton_cauchy(&y, &[0.0; 3], CauchyParams { theta: 0.0, delta: 1.0 }, &EmConfig::default());
        assert!(matches!(r, Err(Error::DegenerateData(_))));
    }

    #[test]
    fn newton_never_scores_below_start() {
        let y = [0.0, 0.1, 0.2, 50.0, -70.0, 3.0];
        let w = [0.9, 0.1, 0.5, 1.0, 0.2, 0.7];
        for start in [CauchyParams { theta: 40.0, delta: 0.01 }, CauchyParams { theta: -3.0, delta: 100.0 }] {
            let est = newton_cauchy(&y, &w, start, &EmConfig::default()).unwrap();
            assert!(cauchy_objective(&y, &w, &est.params) >= cauchy_objective(&y, &w, &start));
        }
    }

    #[test]
    fn too_few_observations_refused() {
        let series = IntervalSeries::unlabelled(vec![vec![0.1, 0.5, -0.3], (0..20).map(|i| (i as f64).sin()).collect()]).unwrap();
        let fits = fit_model1(&series, &EmConfig::default());
        assert!(matches!(fits[0], Err(Error::TooFewObservations { needed: 5, got: 3 })));
        assert!(fits[1].is_ok());
    }

    #[test]
    fn model2_refuses_single_interval() {
        let series = IntervalSeries::single((0..20).map(|i| (i as f64).cos()).collect()).unwrap();
        assert!(fit_model2(&series, &EmConfig::default()).is_err());
    }

    #[test]
    fn model2_parameter_count() {
        let p = Model2Params { gaussian: std_mix(0.5).gaussian, cauchy: std_mix(0.5).cauchy, alphas: vec![0.5; 7] };
        assert_eq!(p.parameter_count(), 11);
    }
}
