//! Model 3: shared components with weights `alpha_i = logistic(x_i . beta)`.
//!
//! Predictors are observed per interval, so the same model covers the
//! mixed-frequency case (monthly predictors, weekly returns) by giving each
//! interval its own row and any number of observations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distributions::{CauchyParams, GaussianParams, MixtureParams};
use crate::em::{init_estimates, run_em, Components, EmConfig, ScaleFloors, WeightUpdate};
use crate::error::{Error, Result};
use crate::model::{
    loglik_unchecked, Diagnostics, FitResult, HasComponents, IntervalSeries, StdErrors, WeightProvenance,
    WeightSeries,
};

/// `‖beta‖_inf` beyond which the fit is treated as separated and clamped.
pub const BETA_CLAMP: f64 = 1e3;

/// Weights closer than this to 0 or 1 mark a (quasi-)separated fit.
pub const SATURATION_TOL: f64 = 1e-10;
/// Gradient tolerance per observation for the weight-coefficient solve.
const GRAD_RTOL: f64 = 1e-12;
const MAX_NEWTON_ITER: usize = 200;
const MAX_HALVINGS: usize = 30;

/// One row of predictors per interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousMatrix {
    rows: Vec<Vec<f64>>,
    names: Vec<String>,
    intercept: bool,
}

impl ExogenousMatrix {
    pub fn new(rows: Vec<Vec<f64>>, names: Vec<String>, intercept: bool) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("predictor matrix has no rows".into()));
        }
        let p = names.len();
        if p == 0 && !intercept {
            return Err(Error::InvalidInput("need at least one predictor or an intercept".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} values, expected {p}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has a non-finite predictor")));
            }
        }
        Ok(Self { rows, names, intercept })
    }

    /// Columns named `x1..xp`.
    pub fn unnamed(rows: Vec<Vec<f64>>, intercept: bool) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        Self::new(rows, (1..=p).map(|j| format!("x{j}")).collect(), intercept)
    }

    /// Intercept-only design with `k` rows.
    pub fn intercept_only(k: usize) -> Self {
        Self { rows: vec![Vec::new(); k], names: Vec::new(), intercept: true }
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    /// Number of predictors, not counting the intercept.
    pub fn p(&self) -> usize {
        self.names.len()
    }

    /// Length of `beta`.
    pub fn dim(&self) -> usize {
        self.p() + usize::from(self.intercept)
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Names of the entries of `beta`.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut n = Vec::with_capacity(self.dim());
        if self.intercept {
            n.push("intercept".to_string());
        }
        n.extend(self.names.iter().cloned());
        n
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// `x_i . beta` including the intercept.
    pub fn linear_predictor(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "beta has {} entries, design has {}",
                beta.len(),
                self.dim()
            )));
        }
        Ok(self.rows.iter().map(|r| self.eta(r, beta)).collect())
    }

    #[inline]
    fn eta(&self, row: &[f64], beta: &[f64]) -> f64 {
        let (b0, rest) = if self.intercept { (beta[0], &beta[1..]) } else { (0.0, beta) };
        b0 + row.iter().zip(rest).map(|(x, b)| x * b).sum::<f64>()
    }

    /// Rows `range` as a new matrix.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.rows[range].to_vec(), self.names.clone(), self.intercept)
    }

    /// Copy with predictor `j` multiplied by `c`.
    pub fn with_scaled_column(&self, j: usize, c: f64) -> Self {
        let mut m = self.clone();
        for r in &mut m.rows {
            r[j] *= c;
        }
        m
    }
}

/// Overflow-safe logistic function.
#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn logit(a: f64) -> f64 {
    (a / (1.0 - a)).ln()
}

pub fn logistic_weights(x: &ExogenousMatrix, beta: &[f64]) -> Result<WeightSeries> {
    if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite coefficient {b}")));
    }
    Ok(WeightSeries {
        values: x.linear_predictor(beta)?.into_iter().map(logistic).collect(),
        provenance: WeightProvenance::Estimated,
    })
}

/// Centering and scaling of predictor columns. Columns are centered only
/// when an intercept is present to absorb the shift.
#[derive(Debug, Clone)]
struct Standardizer {
    center: Vec<f64>,
    scale: Vec<f64>,
    intercept: bool,
}

impl Standardizer {
    fn fit(x: &ExogenousMatrix) -> Result<Self> {
        let k = x.k() as f64;
        let mut center = Vec::with_capacity(x.p());
        let mut scale = Vec::with_capacity(x.p());
        for j in 0..x.p() {
            let col = x.column(j);
            let c = if x.intercept { col.iter().sum::<f64>() / k } else { 0.0 };
            let s = (col.iter().map(|v| (v - c) * (v - c)).sum::<f64>() / k).sqrt();
            if !(s > 0.0) {
                return Err(Error::RankDeficient {
                    column: j + usize::from(x.intercept),
                    name: x.names[j].clone(),
                });
            }
            center.push(c);
            scale.push(s);
        }
        Ok(Self { center, scale, intercept: x.intercept })
    }

    fn row(&self, raw: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(raw.len() + 1);
        if self.intercept {
            z.push(1.0);
        }
        z.extend(raw.iter().zip(self.center.iter().zip(&self.scale)).map(|(v, (c, s))| (v - c) / s));
        z
    }

    fn to_working(&self, beta: &[f64]) -> Vec<f64> {
        let off = usize::from(self.intercept);
        let mut b: Vec<f64> = beta.to_vec();
        for j in 0..self.scale.len() {
            b[j + off] = beta[j + off] * self.scale[j];
        }
        if self.intercept {
            b[0] = beta[0] + (0..self.scale.len()).map(|j| beta[j + 1] * self.center[j]).sum::<f64>();
        }
        b
    }

    fn to_original(&self, b: &[f64]) -> Vec<f64> {
        let off = usize::from(self.intercept);
        let mut beta = b.to_vec();
        for j in 0..self.scale.len() {
            beta[j + off] = b[j + off] / self.scale[j];
        }
        if self.intercept {
            beta[0] = b[0] - (0..self.scale.len()).map(|j| beta[j + 1] * self.center[j]).sum::<f64>();
        }
        beta
    }
}

/// Fails with the first column that is (numerically) a combination of the
/// ones before it.
fn check_rank(z: &[Vec<f64>], names: &[String]) -> Result<()> {
    let d = z.first().map_or(0, Vec::len);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let mut v: Vec<f64> = z.iter().map(|r| r[j]).collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 1e-10 * norm0.max(f64::MIN_POSITIVE)) || norm0 == 0.0 {
            return Err(Error::RankDeficient { column: j, name: names[j].clone() });
        }
        v.iter_mut().for_each(|a| *a /= norm);
        basis.push(v);
    }
    if z.len() < d {
        return Err(Error::RankDeficient { column: z.len(), name: names[z.len()].clone() });
    }
    Ok(())
}

/// Output of [`maximize_beta`].
#[derive(Debug, Clone, PartialEq)]
pub struct BetaEstimate {
    /// Coefficients on the original predictor scale.
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub clamped: bool,
    /// Objective after each accepted step; entry 0 is the start.
    pub objective_trace: Vec<f64>,
}

/// `sum_i (eta_i S_i - n_i log(1 + exp(eta_i)))` with `S_i = sum_j p_ij`.
pub fn beta_objective(resp: &[Vec<f64>], x: &ExogenousMatrix, beta: &[f64]) -> Result<f64> {
    let eta = x.linear_predictor(beta)?;
    Ok(resp
        .iter()
        .zip(eta)
        .map(|(p, e)| e * p.iter().sum::<f64>() - p.len() as f64 * softplus(e))
        .sum())
}

/// Maximizes the weighted logistic log-likelihood with fractional targets
/// `p_ij` by Newton (IRLS) on standardized predictors.
pub fn maximize_beta(resp: &[Vec<f64>], x: &ExogenousMatrix, start: &[f64]) -> Result<BetaEstimate> {
    if resp.len() != x.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} responsibility groups for {} predictor rows",
            resp.len(),
            x.k()
        )));
    }
    if start.len() != x.dim() {
        return Err(Error::DimensionMismatch(format!(
            "start has {} entries, design has {}",
            start.len(),
            x.dim()
        )));
    }
    let st = Standardizer::fit(x)?;
    let z: Vec<Vec<f64>> = x.rows.iter().map(|r| st.row(r)).collect();
    check_rank(&z, &x.coefficient_names())?;

    let totals: Vec<f64> = resp.iter().map(|p| p.iter().sum()).collect();
    let counts: Vec<f64> = resp.iter().map(|p| p.len() as f64).collect();
    let d = x.dim();
    let grad_tol = GRAD_RTOL * counts.iter().sum::<f64>().max(1.0);

    let objective = |b: &[f64]| -> f64 {
        z.iter()
            .zip(totals.iter().zip(&counts))
            .map(|(zi, (s, n))| {
                let e: f64 = zi.iter().zip(b).map(|(a, c)| a * c).sum();
                e * s - n * softplus(e)
            })
            .sum()
    };

    let mut b = st.to_working(start);
    let mut f = objective(&b);
    let mut trace = vec![f];
    let mut converged = false;
    let mut clamped = false;
    let mut iterations = 0;

    while iterations < MAX_NEWTON_ITER {
        let mut g = DVector::<f64>::zeros(d);
        let mut info = DMatrix::<f64>::zeros(d, d);
        for (zi, (s, n)) in z.iter().zip(totals.iter().zip(&counts)) {
            let e: f64 = zi.iter().zip(&b).map(|(a, c)| a * c).sum();
            let a = logistic(e);
            let wgt = n * a * (1.0 - a);
            for r in 0..d {
                g[r] += zi[r] * (s - n * a);
                for c in 0..=r {
                    info[(r, c)] += wgt * zi[r] * zi[c];
                }
            }
        }
        if g.amax() < grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        info.fill_upper_triangle_with_lower_triangle();
        let dir = match info.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            // saturated weights: ridge the information matrix
            None => {
                let ridge = 1e-8 * info.diagonal().amax().max(1.0);
                let m = info + DMatrix::identity(d, d) * ridge;
                match m.cholesky() {
                    Some(ch) => ch.solve(&g),
                    None => g.clone() / counts.iter().sum::<f64>(),
                }
            }
        };

        let mut step = 1.0;
        let mut accepted = None;
        let noise = 1e-13 * f.abs().max(1.0);
        for h in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = b.iter().zip(dir.iter()).map(|(v, dv)| v + step * dv).collect();
            let fc = objective(&cand);
            // A full step within rounding of the current value is accepted;
            // its exact ascent is below the resolution of the objective.
            if fc > f || (h == 0 && fc >= f - noise) {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                b = cand;
                f = fc;
                trace.push(f);
            }
            None => break,
        }
        if b.iter().any(|v| v.abs() > BETA_CLAMP) {
            break;
        }
    }
    if b.iter().any(|v| v.abs() > BETA_CLAMP) {
        let m = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        b.iter_mut().for_each(|v| *v *= BETA_CLAMP / m);
        clamped = true;
        log::warn!("logistic coefficients exceeded {BETA_CLAMP}; treating as separated and clamping");
    }

    Ok(BetaEstimate { beta: st.to_original(&b), iterations, converged, clamped, objective_trace: trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticMixtureParams {
    pub gaussian: GaussianParams,
    pub cauchy: CauchyParams,
    /// Original predictor scale; intercept first when present.
    pub beta: Vec<f64>,
}

impl HasComponents for LogisticMixtureParams {
    fn gaussian(&self) -> GaussianParams {
        self.gaussian
    }
    fn cauchy(&self) -> CauchyParams {
        self.cauchy
    }
}

struct LogisticWeights<'a> {
    x: &'a ExogenousMatrix,
    beta: Vec<f64>,
    alphas: Vec<f64>,
}

impl WeightUpdate for LogisticWeights<'_> {
    fn weights(&self) -> Vec<f64> {
        self.alphas.clone()
    }

    fn update(
        &mut self,
        _series: &IntervalSeries,
        resp: &[Vec<f64>],
        _cfg: &EmConfig,
        diag: &mut Diagnostics,
    ) -> Result<f64> {
        let est = maximize_beta(resp, self.x, &self.beta)?;
        if est.clamped && !diag.beta_clamped {
            diag.beta_clamped = true;
            diag.warn(format!("logistic coefficients clamped at |beta| = {BETA_CLAMP} (separation)"));
        }
        let alphas = logistic_weights(self.x, &est.beta)?.values;
        let db = est.beta.iter().zip(&self.beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let da = alphas.iter().zip(&self.alphas).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.beta = est.beta;
        self.alphas = alphas;
        Ok(db.max(da))
    }
}

/// Model-3 EM: responsibilities, then `beta`, then the Gaussian moments,
/// then the Cauchy Newton solve.
pub fn fit_model3(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    cfg: &EmConfig,
) -> Result<FitResult<LogisticMixtureParams>> {
    if x.k() != series.k() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictor rows for {} intervals",
            x.k(),
            series.k()
        )));
    }
    if series.k() < x.p() + 2 {
        return Err(Error::TooFewObservations { needed: x.p() + 2, got: series.k() });
    }
    let y = series.flatten();
    let init = init_estimates(&y)?;
    let beta0 = vec![0.0; x.dim()];
    let mut weights = LogisticWeights { x, alphas: logistic_weights(x, &beta0)?.values, beta: beta0 };
    let run = run_em(
        series,
        Components { gaussian: init.gaussian, cauchy: init.cauchy },
        &mut weights,
        cfg,
        ScaleFloors::from_data(&y),
    )?;
    let mut diagnostics = run.diagnostics;
    if run.weights.iter().any(|&a| a < SATURATION_TOL || a > 1.0 - SATURATION_TOL) {
        diagnostics.weights_saturated = true;
        diagnostics.warn("fitted weights saturate at 0 or 1; beta is not identified along the separating direction");
    }
    Ok(FitResult {
        params: LogisticMixtureParams {
            gaussian: run.components.gaussian,
            cauchy: run.components.cauchy,
            beta: weights.beta,
        },
        weights: run.weights,
        loglik_trace: run.trace,
        iterations: run.iterations,
        converged: run.converged,
        responsibilities: run.responsibilities,
        std_errors: None,
        diagnostics,
    })
}

/// Weights implied by a fitted model for new predictor rows.
pub fn predict_weights(fit: &LogisticMixtureParams, x_new: &ExogenousMatrix) -> Result<WeightSeries> {
    let mut w = logistic_weights(x_new, &fit.beta)?;
    w.provenance = WeightProvenance::Predicted;
    Ok(w)
}

fn model3_loglik(series: &IntervalSeries, x: &ExogenousMatrix, phi: &[f64]) -> f64 {
    let gaussian = GaussianParams { mu: phi[0], sigma: phi[1].exp() };
    let cauchy = CauchyParams { theta: phi[2], delta: phi[3].exp() };
    let eta = x.rows.iter().map(|r| x.eta(r, &phi[4..]));
    let mixtures: Vec<MixtureParams> =
        eta.map(|e| MixtureParams { gaussian, cauchy, alpha: logistic(e) }).collect();
    loglik_unchecked(series, &mixtures)
}

/// Relative tolerance for calling an information eigenvalue flat.
const FLAT_EIGEN_RTOL: f64 = 1e-8;

/// Standard errors from the observed information (negative Hessian of the
/// observed-data log-likelihood), by central finite differences on the
/// internal scale `(mu, log sigma, theta, log delta, beta)`.
///
/// If the information is not positive definite, parameters are dropped
/// until the remaining block is, and the dropped ones are reported as
/// `None` with `definite = false`.
pub fn fisher_std_errors(
    series: &IntervalSeries,
    x: &ExogenousMatrix,
    fit: &LogisticMixtureParams,
) -> Result<StdErrors> {
    fit.gaussian.validate()?;
    fit.cauchy.validate()?;
    if x.k() != series.k() || fit.beta.len() != x.dim() {
        return Err(Error::DimensionMismatch("fit, predictors and series disagree".into()));
    }
    let mut phi = vec![fit.gaussian.mu, fit.gaussian.sigma.ln(), fit.cauchy.theta, fit.cauchy.delta.ln()];
    phi.extend_from_slice(&fit.beta);
    let n = phi.len();

    // typical magnitude of each coordinate, used to make the step relative
    let mut typical = vec![fit.gaussian.sigma, 1.0, fit.cauchy.delta, 1.0];
    if x.intercept {
        typical.push(1.0);
    }
    for j in 0..x.p() {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / col.len() as f64;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64).sqrt();
        typical.push(if sd > 0.0 { 1.0 / sd } else { 1.0 });
    }
    let h: Vec<f64> = phi.iter().zip(&typical).map(|(v, t)| 1e-5 * v.abs().max(*t)).collect();

    let f = |p: &[f64]| model3_loglik(series, x, p);
    let f0 = f(&phi);
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut p = phi.clone();
        p[i] += si * h[i];
        p[j] += sj * h[j];
        f(&p)
    };
    let mut hess = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let fp = shifted(i, 1.0, i, 0.0);
        let fm = shifted(i, -1.0, i, 0.0);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let v = (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                + shifted(i, -1.0, j, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let info = -hess;

    let mut keep: Vec<usize> = (0..n).collect();
    let mut definite = true;
    let cov = loop {
        if keep.is_empty() {
            break None;
        }
        let sub = DMatrix::from_fn(keep.len(), keep.len(), |r, c| info[(keep[r], keep[c])]);
        let eig = SymmetricEigen::new(sub.clone());
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        let lmax = eig.eigenvalues.amax();
        if lmin > FLAT_EIGEN_RTOL * lmax && lmin.is_finite() {
            break sub.try_inverse();
        }
        definite = false;
        let v = eig.eigenvectors.column(imin);
        let drop = (0..keep.len()).max_by(|a, b| v[*a].abs().total_cmp(&v[*b].abs())).expect("non-empty");
        keep.remove(drop);
    };

    let mut values = vec![None; n];
    if let Some(cov) = cov {
        for (r, &i) in keep.iter().enumerate() {
            let var = cov[(r, r)];
            if var > 0.0 {
                let se = var.sqrt();
                values[i] = Some(match i {
                    1 => fit.gaussian.sigma * se,
                    3 => fit.cauchy.delta * se,
                    _ => se,
                });
            }
        }
    }
    if !definite {
        log::warn!("observed information is not positive definite; some standard errors omitted");
    }
    let mut names: Vec<String> = ["mu", "sigma", "theta", "delta"].iter().map(|s| s.to_string()).collect();
    names.extend(x.coefficient_names().into_iter().map(|c| format!("beta[{c}]")));
    Ok(StdErrors { names, values, definite })
}
