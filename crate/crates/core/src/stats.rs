//! Small descriptive statistics used for initialization and summaries.

use crate::error::{Error, Result};

/// Sample quantile with linear interpolation between order statistics
/// (Hyndman-Fan type 7, the R and NumPy default).
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sorted_copy(y: &[f64]) -> Vec<f64> {
    let mut s = y.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn median(y: &[f64]) -> f64 {
    quantile_type7(&sorted_copy(y), 0.5)
}

/// Interquartile range, type-7 quartiles.
pub fn iqr(y: &[f64]) -> f64 {
    let s = sorted_copy(y);
    quantile_type7(&s, 0.75) - quantile_type7(&s, 0.25)
}

pub fn mean(y: &[f64]) -> f64 {
    y.iter().sum::<f64>() / y.len() as f64
}

/// Sample variance with the `n - 1` denominator. Zero for a single value.
pub fn sample_variance(y: &[f64]) -> f64 {
    if y.len() < 2 {
        return 0.0;
    }
    let m = mean(y);
    y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (y.len() - 1) as f64
}

/// Pearson correlation of two equally long slices.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "correlation needs two series of equal length >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(f64::NAN);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// `log(exp(a) + exp(b))` without overflow.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_matches_reference_values() {
        // R: quantile(c(1,2,3,4), c(.25,.5,.75)) = 1.75 2.5 3.25
        let s = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile_type7(&s, 0.25) - 1.75).abs() < 1e-15);
        assert!((quantile_type7(&s, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_type7(&s, 0.75) - 3.25).abs() < 1e-15);
        assert_eq!(iqr(&[-1.0, 0.0, 1.0]), 1.0);
        assert_eq!(median(&[3.0, -1.0, 0.0]), 0.0);
    }

    #[test]
    fn log_add_exp_handles_extremes() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, -3.0), -3.0);
        assert!((log_add_exp(-1000.0, -1000.0) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
    }
}
