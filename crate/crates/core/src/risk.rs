//! Value-at-risk from fitted mixtures.
//!
//! Losses are negated returns: `VaR(q) = -Q(q)` where `Q` is the mixture
//! quantile of the return distribution. Expected shortfall is not offered;
//! with any Cauchy weight the tail expectation diverges.

use serde::Serialize;

use crate::distributions::MixtureParams;
use crate::error::{Error, Result};
use crate::model::{FitResult, HasComponents};

/// Stated on every VaR table.
pub const LOSS_CONVENTION: &str = "VaR(q) = -quantile(q) of the return distribution; positive values are losses";

const CDF_TOL: f64 = 1e-10;

/// Quantile of a Gaussian-Cauchy mixture by bisection on the CDF.
///
/// The mixture CDF is a convex combination of the component CDFs, so its
/// `q` quantile lies between the component quantiles.
pub fn mixture_quantile(q: f64, p: &MixtureParams) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("quantile level must lie in (0, 1), got {q}")));
    }
    p.validate()?;
    let a = p.gaussian.quantile(q);
    let b = p.cauchy.quantile(q);
    if p.alpha == 1.0 {
        return Ok(a);
    }
    if p.alpha == 0.0 {
        return Ok(b);
    }
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    // Guard against rounding at the bracket ends.
    let pad = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
    lo -= pad;
    hi += pad;
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let f = p.cdf(mid) - q;
        if f.abs() < CDF_TOL || mid == lo || mid == hi {
            break;
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Value at risk at level `q`.
pub fn value_at_risk(q: f64, p: &MixtureParams) -> Result<f64> {
    Ok(-mixture_quantile(q, p)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarRow {
    pub interval: usize,
    pub level: f64,
    pub var: f64,
}

/// VaR at each level for every interval of a converged fit.
pub fn var_report<P: HasComponents>(fit: &FitResult<P>, levels: &[f64]) -> Result<Vec<VarRow>> {
    if !fit.converged {
        return Err(Error::NotConverged);
    }
    let mut rows = Vec::with_capacity(levels.len() * fit.weights.len());
    for (i, m) in fit.interval_mixtures().iter().enumerate() {
        for &q in levels {
            rows.push(VarRow { interval: i + 1, level: q, var: value_at_risk(q, m)? });
        }
    }
    Ok(rows)
}

/// Expected shortfall is undefined for mixtures with a Cauchy component.
pub fn expected_shortfall(_q: f64, p: &MixtureParams) -> Result<f64> {
    if p.alpha < 1.0 {
        return Err(Error::InvalidInput(
            "expected shortfall diverges: the Cauchy component has no finite mean".into(),
        ));
    }
    Err(Error::InvalidInput("expected shortfall is not provided".into()))
}
