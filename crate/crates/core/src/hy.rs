//! Hayashi-Yoshida estimator, realized covariation and the 1-correlated
//! subsequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hbt::ObservationSeries;

/// `Σ Δp1·Δp2` over the synchronous intervals that end before `t`.
pub fn realized_covariation(times: &[f64], p1: &[f64], p2: &[f64], t: f64) -> Result<f64> {
    if p1.len() != times.len() || p2.len() != times.len() {
        return Err(Error::LengthMismatch {
            left: p1.len(),
            right: p2.len(),
        });
    }
    check_sorted(times)?;
    let n = times.partition_point(|&s| s < t);
    Ok((1..n)
        .map(|i| (p1[i] - p1[i - 1]) * (p2[i] - p2[i - 1]))
        .sum())
}

fn check_sorted(times: &[f64]) -> Result<()> {
    match times.windows(2).position(|w| !(w[1] > w[0])) {
        Some(i) => Err(Error::UnsortedTimes { index: i + 1 }),
        None => Ok(()),
    }
}

/// Pair form of the Hayashi-Yoshida estimator on the observed prices, using
/// all returns whose end time lies in `(0, t)`.
///
/// Return intervals are half-open, so touching endpoints do not overlap.
pub fn hayashi_yoshida(obs1: &ObservationSeries, obs2: &ObservationSeries, t: f64) -> Result<f64> {
    check_sorted(&obs1.times)?;
    check_sorted(&obs2.times)?;
    Ok(hy_sweep(&obs1.times, &obs1.observed, &obs2.times, &obs2.observed, t))
}

/// Two-pointer sweep over sorted times; no validation.
pub fn hy_sweep(a: &[f64], pa: &[f64], b: &[f64], pb: &[f64], t: f64) -> f64 {
    let n = a.partition_point(|&s| s < t);
    let m = b.partition_point(|&s| s < t);
    if n < 2 || m < 2 {
        return 0.0;
    }
    let last = m - 1;
    // For return i of A: lo = first j with b_j > a_{i-1}, hi = last j with b_{j-1} < a_i.
    let (mut lo, mut hi) = (1usize, 0usize);
    let mut total = 0.0;
    for i in 1..n {
        while lo <= last && b[lo] <= a[i - 1] {
            lo += 1;
        }
        while hi < last && b[hi] < a[i] {
            hi += 1;
        }
        if lo <= hi {
            total += (pa[i] - pa[i - 1]) * (pb[hi] - pb[lo - 1]);
        }
    }
    total
}

/// `(max{τ ∈ times2 : τ < reference}, min{τ ∈ times2 : τ ≥ reference})`, the
/// first defaulting to 0.
pub fn neighbor_times(reference: f64, times2: &[f64]) -> (f64, Option<f64>) {
    let k = times2.partition_point(|&s| s < reference);
    let minus = if k == 0 { 0.0 } else { times2[k - 1] };
    (minus, times2.get(k).copied())
}

/// 1-correlated subsequence of asset-1 times with its asset-2 companions.
///
/// Index 0 is the starting point; return `k` (stored at position `k − 1`)
/// spans `τ^{1C}_{k−1} → τ^{1C}_k` for asset 1 and `τ^{1C,−}_{k−1} → τ^{1C,+}_k`
/// for asset 2.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OneCorrelatedSeries {
    pub tau_1c: Vec<f64>,
    pub tau_minus: Vec<f64>,
    pub tau_plus: Vec<f64>,
    /// Positions of `tau_1c` in the asset-1 series.
    pub index_1c: Vec<usize>,
    /// Positions of `tau_minus` in the asset-2 series.
    pub index_minus: Vec<usize>,
    /// Positions of `tau_plus` in the asset-2 series.
    pub index_plus: Vec<usize>,
    pub returns_1: Vec<f64>,
    pub returns_2_mp: Vec<f64>,
    pub durations: Vec<f64>,
}

impl OneCorrelatedSeries {
    /// Number of 1C returns.
    pub fn len(&self) -> usize {
        self.returns_1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns_1.is_empty()
    }

    /// Check the ordering invariants against the source series.
    pub fn check(&self, obs1: &ObservationSeries, obs2: &ObservationSeries) -> Result<()> {
        let n = self.len();
        let bad = |what: &str, k: usize| Err(Error::InvalidParameter(format!("1C invariant: {what} at {k}")));
        if self.tau_1c.len() != n + 1 || self.tau_plus.len() != n + 1 || self.tau_minus.len() != n + 1 {
            return bad("length", 0);
        }
        for k in 0..=n {
            if obs1.times[self.index_1c[k]] != self.tau_1c[k] {
                return bad("tau_1c not an asset-1 time", k);
            }
            if self.tau_plus[k] < self.tau_1c[k] {
                return bad("tau_plus < tau_1c", k);
            }
            if k > 0 {
                if !(self.tau_minus[k] < self.tau_1c[k]) {
                    return bad("tau_minus >= tau_1c", k);
                }
                if !(self.tau_1c[k] > self.tau_plus[k - 1]) {
                    return bad("no asset-2 time between 1C times", k);
                }
            }
        }
        let _ = obs2;
        Ok(())
    }
}

/// Build the 1-correlated subsequence: from `τ^{1C}_k` take the first asset-2
/// time at or after it, then the first asset-1 time strictly after that.
/// Stops as soon as either time is missing.
pub fn one_correlated(obs1: &ObservationSeries, obs2: &ObservationSeries) -> OneCorrelatedSeries {
    let (a, b) = (&obs1.times, &obs2.times);
    let mut out = OneCorrelatedSeries::default();
    if a.is_empty() || b.is_empty() {
        return out;
    }
    let (mut ia, mut jb) = (0usize, 0usize);
    // First asset-2 time >= a[0].
    while jb < b.len() && b[jb] < a[ia] {
        jb += 1;
    }
    if jb == b.len() {
        return out;
    }
    out.tau_1c.push(a[0]);
    out.index_1c.push(0);
    out.tau_minus.push(0.0);
    out.index_minus.push(0);
    out.tau_plus.push(b[jb]);
    out.index_plus.push(jb);
    loop {
        // Next asset-1 time strictly after the current τ⁺.
        while ia < a.len() && a[ia] <= b[jb] {
            ia += 1;
        }
        if ia == a.len() {
            break;
        }
        let minus_j = {
            let mut j = jb;
            while j + 1 < b.len() && b[j + 1] < a[ia] {
                j += 1;
            }
            j
        };
        let plus_j = minus_j + 1;
        if plus_j == b.len() {
            break;
        }
        out.tau_1c.push(a[ia]);
        out.index_1c.push(ia);
        out.tau_minus.push(b[minus_j]);
        out.index_minus.push(minus_j);
        out.tau_plus.push(b[plus_j]);
        out.index_plus.push(plus_j);
        jb = plus_j;
    }
    let (z1, z2) = (&obs1.observed, &obs2.observed);
    for k in 1..out.tau_1c.len() {
        out.returns_1
            .push(z1[out.index_1c[k]] - z1[out.index_1c[k - 1]]);
        // τ^{1C,−}_0 = 0 is the asset-2 starting point.
        out.returns_2_mp
            .push(z2[out.index_plus[k]] - z2[out.index_minus[k - 1]]);
        out.durations.push(out.tau_1c[k] - out.tau_1c[k - 1]);
    }
    out
}

/// `Σ ΔX^{(1)}_{τ^{1C}} ΔX^{(2)}_{τ^{1C,−,+}}` over returns with `τ^{1C,+} < t`.
pub fn hy_from_1c(one_c: &OneCorrelatedSeries, t: f64) -> f64 {
    (0..one_c.len())
        .filter(|&k| one_c.tau_plus[k + 1] < t)
        .map(|k| one_c.returns_1[k] * one_c.returns_2_mp[k])
        .sum()
}
