//! Summary statistics for Monte Carlo output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn rmse(estimates: &[f64], truths: &[f64]) -> f64 {
    let n = estimates.len() as f64;
    (estimates
        .iter()
        .zip(truths)
        .map(|(e, t)| (e - t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

pub fn median(xs: &[f64]) -> Result<f64> {
    quantile(xs, 0.5)
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `(n − 1)p`).
pub fn quantile(xs: &[f64], p: f64) -> Result<f64> {
    Ok(quantiles(xs, &[p])?[0])
}

pub fn quantiles(xs: &[f64], ps: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::EmptySeries);
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidParameter("NaN in sample".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    ps.iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("quantile level {p} outside [0, 1]")));
            }
            let h = (sorted.len() - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

/// Equal-width histogram on `[lo, hi)`; values outside are clipped into the
/// end bins.
pub fn histogram(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 || !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "histogram needs bins > 0 and lo < hi, got {bins} bins on [{lo}, {hi})"
        )));
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            bin_left: lo + k as f64 * width,
            bin_right: lo + (k + 1) as f64 * width,
            count: 0,
        })
        .collect();
    for x in xs.iter().filter(|x| x.is_finite()) {
        let k = ((x - lo) / width).floor().clamp(0.0, (bins - 1) as f64) as usize;
        out[k].count += 1;
    }
    Ok(out)
}
