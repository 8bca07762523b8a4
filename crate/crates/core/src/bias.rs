//! Block estimates of the asymptotic bias and variance of the
//! Hayashi-Yoshida estimator, the bias-corrected estimator and the feasible
//! standardized statistic.
//!
//! The 1C returns are cut into blocks of `h`. On each block the volatilities
//! and correlation are treated as constant, the compensated increments `N̂`
//! are formed, and their sample moments give the block bias coefficients and
//! a nonnegative block variance.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hbt::ObservationSeries;
use crate::hy::{hayashi_yoshida, one_correlated, OneCorrelatedSeries};

pub const RHO_CLAMP: f64 = 0.999;
pub const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPlan {
    pub h: usize,
    /// Zero-based ranges into the 1C returns.
    pub block_ranges: Vec<Range<usize>>,
    /// `τ^{1C}` at block edges (`B + 1` values).
    pub asset1_bounds: Vec<f64>,
    /// `τ^{1C,+}` at block edges.
    pub asset2_bounds: Vec<f64>,
    /// Positions of the edges in the asset-1 series.
    pub asset1_index: Vec<usize>,
    /// Positions of the edges in the asset-2 series.
    pub asset2_index: Vec<usize>,
}

impl BlockPlan {
    pub fn blocks(&self) -> usize {
        self.block_ranges.len()
    }
}

/// `max(2, ⌊√n⌋)` where `n` is the number of observations of both assets
/// after time 0.
pub fn default_block_size(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2)
}

pub fn partition_blocks(one_c: &OneCorrelatedSeries, h: usize) -> Result<BlockPlan> {
    if h < 2 {
        return Err(Error::BlockSize(h));
    }
    let n = one_c.len();
    if n == 0 {
        return Err(Error::EmptySeries);
    }
    let edges: Vec<usize> = (0..n).step_by(h).chain(std::iter::once(n)).collect();
    Ok(BlockPlan {
        h,
        block_ranges: edges.windows(2).map(|w| w[0]..w[1]).collect(),
        asset1_bounds: edges.iter().map(|&e| one_c.tau_1c[e]).collect(),
        asset2_bounds: edges.iter().map(|&e| one_c.tau_plus[e]).collect(),
        asset1_index: edges.iter().map(|&e| one_c.index_1c[e]).collect(),
        asset2_index: edges.iter().map(|&e| one_c.index_plus[e]).collect(),
    })
}

/// Volatility estimates of one asset on its own block window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VolEstimate {
    /// Root of the summed squared returns in the window.
    pub sigma_tilde: f64,
    pub ab_sigma: f64,
    /// `σ̃ − AB̂σ`, or `σ̃` when that is not positive.
    pub sigma_raw: f64,
    /// `sigma_raw` per unit time.
    pub sigma_hat: f64,
    pub window: f64,
}

/// Estimate from the returns of `obs` ending in the index window `(from, to]`.
pub fn vol_estimate(obs: &ObservationSeries, from: usize, to: usize) -> VolEstimate {
    let (mut s2, mut s3) = (0.0, 0.0);
    for j in from + 1..=to {
        let d = obs.observed[j] - obs.observed[j - 1];
        s2 += d * d;
        s3 += d * d * d;
    }
    let sigma_tilde = s2.sqrt();
    let ab_sigma = if s2 > 0.0 { 2.0 * s3 / (3.0 * s2) } else { 0.0 };
    let corrected = sigma_tilde - ab_sigma;
    let sigma_raw = if corrected > 0.0 { corrected } else { sigma_tilde };
    let window = obs.times[to] - obs.times[from];
    VolEstimate {
        sigma_tilde,
        ab_sigma,
        sigma_raw,
        sigma_hat: (sigma_raw / window.sqrt()).max(SIGMA_FLOOR),
        window,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpotEstimate {
    pub vol: [VolEstimate; 2],
    pub rho_hat: f64,
    pub rho_clamped: bool,
    /// No squared returns in one of the windows.
    pub degenerate: bool,
}

pub fn block_spot_estimates(
    plan: &BlockPlan,
    obs1: &ObservationSeries,
    obs2: &ObservationSeries,
    one_c: &OneCorrelatedSeries,
) -> Vec<SpotEstimate> {
    (0..plan.blocks())
        .map(|i| {
            let v1 = vol_estimate(obs1, plan.asset1_index[i], plan.asset1_index[i + 1]);
            let v2 = vol_estimate(obs2, plan.asset2_index[i], plan.asset2_index[i + 1]);
            let degenerate = v1.sigma_tilde == 0.0 || v2.sigma_tilde == 0.0;
            let cross: f64 = plan.block_ranges[i]
                .clone()
                .map(|j| one_c.returns_1[j] * one_c.returns_2_mp[j])
                .sum();
            let raw = if degenerate {
                0.0
            } else {
                cross / (v1.sigma_raw.max(SIGMA_FLOOR) * v2.sigma_raw.max(SIGMA_FLOOR))
            };
            let rho_hat = raw.clamp(-RHO_CLAMP, RHO_CLAMP);
            SpotEstimate {
                vol: [v1, v2],
                rho_hat,
                rho_clamped: rho_hat != raw,
                degenerate,
            }
        })
        .collect()
}

/// `N̂_j = r1_j·r2_j − Δτ_j·σ̂1σ̂2ρ̂` with the estimates of `j`'s block.
pub fn compensated_increments(
    one_c: &OneCorrelatedSeries,
    plan: &BlockPlan,
    spots: &[SpotEstimate],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(one_c.len());
    for (range, s) in plan.block_ranges.iter().zip(spots) {
        let drift = s.vol[0].sigma_hat * s.vol[1].sigma_hat * s.rho_hat;
        for j in range.clone() {
            out.push(one_c.returns_1[j] * one_c.returns_2_mp[j] - one_c.durations[j] * drift);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Phis {
    pub av: f64,
    pub ac1: f64,
    pub ac2: f64,
    pub tau: f64,
}

/// Block sample averages; the lag term of the last overall return is dropped.
pub fn block_phis(plan: &BlockPlan, one_c: &OneCorrelatedSeries, n_hat: &[f64]) -> Vec<Phis> {
    plan.block_ranges
        .iter()
        .map(|range| {
            let count = range.len() as f64;
            let mut p = Phis::default();
            for j in range.clone() {
                let next = n_hat.get(j + 1).copied().unwrap_or(0.0);
                p.av += n_hat[j] * n_hat[j] + 2.0 * n_hat[j] * next;
                p.ac1 += n_hat[j] * one_c.returns_1[j];
                p.ac2 += n_hat[j] * one_c.returns_2_mp[j];
                p.tau += one_c.durations[j];
            }
            Phis {
                av: p.av / count,
                ac1: p.ac1 / count,
                ac2: p.ac2 / count,
                tau: p.tau / count,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KsAb {
    pub k1: f64,
    pub kperp: f64,
    pub ab1: f64,
    pub ab2: f64,
}

pub fn block_ks_ab(phis: &Phis, sigma: [f64; 2], rho: f64) -> KsAb {
    let (s1, s2) = (sigma[0].max(SIGMA_FLOOR), sigma[1].max(SIGMA_FLOOR));
    let rho = rho.clamp(-RHO_CLAMP, RHO_CLAMP);
    let k1 = phis.ac1 / (s1 * s1 * phis.tau);
    let kperp = (phis.ac2 / (s2 * s2) - rho * phis.ac1 / (s1 * s2)) / ((1.0 - rho * rho) * phis.tau);
    KsAb {
        k1,
        kperp,
        ab1: k1 - kperp * rho * s2 / s1,
        ab2: kperp,
    }
}

/// Squared residual of the block sum of `N̂` after removing its regression
/// on the block price increments.
pub fn block_av(sum_n_hat: f64, ks: &KsAb, sigma: [f64; 2], rho: f64, dx: [f64; 2]) -> f64 {
    let beta = rho * sigma[1].max(SIGMA_FLOOR) / sigma[0].max(SIGMA_FLOOR);
    (sum_n_hat - ks.k1 * dx[0] - ks.kperp * (dx[1] - beta * dx[0])).powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEstimates {
    pub range: Range<usize>,
    pub spot: SpotEstimate,
    pub phis: Phis,
    pub ks: KsAb,
    pub av_hat: f64,
    /// Asset-1 increment between `τ^{1C}` bounds, asset-2 between `τ^{1C,+}` bounds.
    pub dx: [f64; 2],
    pub duration: f64,
}

impl BlockEstimates {
    pub fn degenerate(&self) -> bool {
        self.spot.degenerate || !(self.phis.tau > 0.0)
    }
}

pub fn block_estimates(
    obs1: &ObservationSeries,
    obs2: &ObservationSeries,
    one_c: &OneCorrelatedSeries,
    plan: &BlockPlan,
) -> Vec<BlockEstimates> {
    let spots = block_spot_estimates(plan, obs1, obs2, one_c);
    let n_hat = compensated_increments(one_c, plan, &spots);
    let phis = block_phis(plan, one_c, &n_hat);
    (0..plan.blocks())
        .map(|i| {
            let spot = spots[i];
            let sigma = [spot.vol[0].sigma_hat, spot.vol[1].sigma_hat];
            let (a0, a1) = (plan.asset1_index[i], plan.asset1_index[i + 1]);
            let (b0, b1) = (plan.asset2_index[i], plan.asset2_index[i + 1]);
            let dx = [
                obs1.observed[a1] - obs1.observed[a0],
                obs2.observed[b1] - obs2.observed[b0],
            ];
            let range = plan.block_ranges[i].clone();
            let ks = block_ks_ab(&phis[i], sigma, spot.rho_hat);
            let sum_n: f64 = n_hat[range.clone()].iter().sum();
            BlockEstimates {
                av_hat: block_av(sum_n, &ks, sigma, spot.rho_hat, dx),
                range,
                spot,
                phis: phis[i],
                ks,
                dx,
                duration: plan.asset1_bounds[i + 1] - plan.asset1_bounds[i],
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub ab_hat: f64,
    pub av_hat: f64,
    pub degenerate_blocks: usize,
    pub clamped_blocks: usize,
}

/// Sum the block contributions; degenerate blocks contribute nothing.
///
/// The variance is the plain sum of the block squares: each square already
/// estimates the variance accumulated over its block.
pub fn aggregate(blocks: &[BlockEstimates]) -> Result<Aggregate> {
    let mut agg = Aggregate {
        ab_hat: 0.0,
        av_hat: 0.0,
        degenerate_blocks: 0,
        clamped_blocks: 0,
    };
    for b in blocks {
        if b.degenerate() {
            agg.degenerate_blocks += 1;
            continue;
        }
        agg.clamped_blocks += b.spot.rho_clamped as usize;
        agg.ab_hat += b.ks.ab1 * b.dx[0] + b.ks.ab2 * b.dx[1];
        agg.av_hat += b.av_hat;
    }
    if agg.degenerate_blocks == blocks.len() {
        return Err(Error::AllBlocksDegenerate {
            blocks: blocks.len(),
        });
    }
    Ok(agg)
}

/// The duration-weighted variance sum `Σ AV̂_i·(τ_{ih} − τ_{(i−1)h})`, kept
/// for comparison with [`aggregate`].
pub fn duration_weighted_av(blocks: &[BlockEstimates]) -> f64 {
    blocks
        .iter()
        .filter(|b| !b.degenerate())
        .map(|b| b.av_hat * b.duration)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub hy: f64,
    pub ab_hat: f64,
    pub av_hat: f64,
    pub bchy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic: Option<f64>,
    /// `1.96·√AV̂`.
    pub half_width: f64,
    pub blocks: usize,
    pub h: usize,
    pub degenerate_blocks: usize,
    pub clamped_blocks: usize,
    pub n_1c: usize,
}

impl EstimationReport {
    pub fn with_truth(mut self, truth: f64) -> Result<Self> {
        self.statistic = Some(feasible_statistic(&self, truth)?);
        Ok(self)
    }
}

pub fn feasible_statistic(report: &EstimationReport, truth: f64) -> Result<f64> {
    if !(report.av_hat > 0.0) {
        return Err(Error::UndefinedStatistic);
    }
    Ok((report.bchy - truth) / report.av_hat.sqrt())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Block size; [`default_block_size`] of the combined observation count
    /// when absent.
    pub h: Option<usize>,
    /// Only observations strictly before `horizon` are used.
    pub horizon: f64,
    pub truth: Option<f64>,
}

impl EstimateOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            h: None,
            horizon,
            truth: None,
        }
    }
}

/// Full estimation chain on two observation series.
pub fn estimate(
    obs1: &ObservationSeries,
    obs2: &ObservationSeries,
    opts: &EstimateOptions,
) -> Result<EstimationReport> {
    obs1.validate()?;
    obs2.validate()?;
    let (o1, o2) = (obs1.truncated(opts.horizon), obs2.truncated(opts.horizon));
    let hy = hayashi_yoshida(&o1, &o2, opts.horizon)?;
    let one_c = one_correlated(&o1, &o2);
    let h = opts.h.unwrap_or_else(|| default_block_size(o1.count() + o2.count()));
    let plan = partition_blocks(&one_c, h)?;
    let blocks = block_estimates(&o1, &o2, &one_c, &plan);
    let agg = aggregate(&blocks)?;
    let report = EstimationReport {
        hy,
        ab_hat: agg.ab_hat,
        av_hat: agg.av_hat,
        bchy: hy - agg.ab_hat,
        statistic: None,
        half_width: 1.96 * agg.av_hat.sqrt(),
        blocks: plan.blocks(),
        h,
        degenerate_blocks: agg.degenerate_blocks,
        clamped_blocks: agg.clamped_blocks,
        n_1c: one_c.len(),
    };
    match opts.truth {
        Some(truth) => report.with_truth(truth),
        None => Ok(report),
    }
}

/// Reports for both asset orderings and their average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricReport {
    pub forward: EstimationReport,
    pub reverse: EstimationReport,
    pub combined: EstimationReport,
}

/// Average the bias and variance estimates over the two asset orderings.
pub fn estimate_symmetric(
    obs1: &ObservationSeries,
    obs2: &ObservationSeries,
    opts: &EstimateOptions,
) -> Result<SymmetricReport> {
    let no_truth = EstimateOptions { truth: None, ..*opts };
    let forward = estimate(obs1, obs2, &no_truth)?;
    let reverse = estimate(obs2, obs1, &no_truth)?;
    let ab_hat = 0.5 * (forward.ab_hat + reverse.ab_hat);
    let av_hat = 0.5 * (forward.av_hat + reverse.av_hat);
    let mut combined = EstimationReport {
        ab_hat,
        av_hat,
        bchy: forward.hy - ab_hat,
        half_width: 1.96 * av_hat.sqrt(),
        degenerate_blocks: forward.degenerate_blocks + reverse.degenerate_blocks,
        clamped_blocks: forward.clamped_blocks + reverse.clamped_blocks,
        ..forward.clone()
    };
    if let Some(truth) = opts.truth {
        combined = combined.with_truth(truth)?;
    }
    Ok(SymmetricReport {
        forward,
        reverse,
        combined,
    })
}
