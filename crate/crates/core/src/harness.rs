//! Replicated simulate → sample → estimate experiments and their summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{estimate, estimate_symmetric, EstimateOptions, EstimationReport};
use crate::error::{ensure, Error, Result};
use crate::hbt::{BoundarySpec, BoundaryVariant, HbtSampler, ObservationSeries, TickSizeLaw};
use crate::sde::{CovariationIntegral, DiffusionSpec, JumpSize, JumpSpec, PathSimulator, VolModel};
use crate::stats::{self, HistogramBin};

/// Caps the number of worker threads used for replications.
pub const THREADS_ENV: &str = "ENDOCOV_THREADS";

pub const QUANTILE_LEVELS: [f64; 6] = [0.005, 0.025, 0.05, 0.95, 0.975, 0.995];

const MAX_FAILURE_RATE: f64 = 0.05;

/// Tick size of the reference settings; `tick_scale` is measured against it.
pub const REFERENCE_TICK: f64 = 1e-4;

/// Share of ρ̂-clamped blocks above which a run is flagged.
pub const CLAMP_FLAG_RATE: f64 = 0.01;

/// The four reference settings, or an explicit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Setting {
        id: u8,
    },
    Custom {
        diffusion: DiffusionSpec,
        boundaries: [BoundarySpec; 2],
    },
}

impl Model {
    pub fn resolve(&self) -> Result<(DiffusionSpec, [BoundarySpec; 2])> {
        match self {
            Model::Setting { id } => setting(*id),
            Model::Custom {
                diffusion,
                boundaries,
            } => Ok((diffusion.clone(), boundaries.clone())),
        }
    }
}

/// Trading days per year. Heston rates, drifts and jump intensities of the
/// reference settings are annual; one simulated day has unit length.
pub const TRADING_DAYS: f64 = 252.0;

fn heston() -> DiffusionSpec {
    let long_run_vol = [0.016, 0.02];
    let per_day = |a: [f64; 2]| a.map(|x| x / TRADING_DAYS);
    DiffusionSpec {
        drift: [0.03 / TRADING_DAYS, 0.02 / TRADING_DAYS, 0.0, 0.0],
        vol_model: VolModel::Heston {
            kappa: per_day([4.5, 5.5]),
            long_run_vol,
            // annual vol-of-vol on annual variance, restated on daily variance
            vol_of_vol: per_day([0.4, 0.5]),
            leverage: [-0.8, -0.7],
            initial_variance: [long_run_vol[0].powi(2), long_run_vol[1].powi(2)],
        },
        ..DiffusionSpec::constant(long_run_vol, 0.2)
    }
}

/// Model and boundaries of reference setting `id` (1 to 4).
pub fn setting(id: u8) -> Result<(DiffusionSpec, [BoundarySpec; 2])> {
    let barriers = [
        BoundarySpec::constant(7e-4, 1e-4),
        BoundarySpec::constant(6e-4, 1e-4),
    ];
    match id {
        1 => Ok((DiffusionSpec::constant([0.016, 0.02], 0.2), barriers)),
        2 => Ok((heston(), barriers)),
        3 => {
            let spec = DiffusionSpec {
                jumps: Some(JumpSpec {
                    price_intensity: [12.0 / TRADING_DAYS, 11.0 / TRADING_DAYS],
                    price_size: JumpSize::Symmetric { magnitude: 1.0 },
                    variance_intensity: [10.0 / TRADING_DAYS, 9.0 / TRADING_DAYS],
                    variance_size: JumpSize::Symmetric { magnitude: 1e-4 / TRADING_DAYS },
                }),
                ..heston()
            };
            Ok((spec, barriers))
        }
        4 => {
            let zones = BoundarySpec::from(BoundaryVariant::uncertainty_zones(1e-4, 0.15, TickSizeLaw::one()));
            Ok((heston(), [zones.clone(), zones]))
        }
        _ => Err(Error::InvalidParameter(format!("unknown setting {id}, expected 1-4"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: Model,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    /// Multiplies every barrier magnitude and tick.
    #[serde(default = "defaults::one")]
    pub tick_scale: f64,
    /// Grid steps per smallest expected inter-observation duration.
    #[serde(default = "defaults::dt_steps")]
    pub dt_steps: f64,
    /// Explicit grid step; overrides `dt_steps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Block size; `max(2, ⌊√(N1 + N2)⌋)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "defaults::one")]
    pub horizon: f64,
    /// Average the bias and variance estimates over both asset orderings.
    #[serde(default)]
    pub symmetric: bool,
}

mod defaults {
    pub fn replications() -> usize {
        252
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn dt_steps() -> f64 {
        100.0
    }
}

impl ExperimentConfig {
    pub fn setting(id: u8, replications: usize, base_seed: u64) -> Self {
        Self {
            model: Model::Setting { id },
            replications,
            tick_scale: 1.0,
            dt_steps: defaults::dt_steps(),
            dt: None,
            h: None,
            base_seed,
            horizon: 1.0,
            symmetric: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.replications >= 1, || "replications must be >= 1".into())?;
        ensure(self.tick_scale.is_finite() && self.tick_scale > 0.0, || {
            "tick_scale must be finite and > 0".into()
        })?;
        ensure(self.dt_steps.is_finite() && self.dt_steps >= 1.0, || {
            "dt_steps must be finite and >= 1".into()
        })?;
        ensure(self.horizon.is_finite() && self.horizon > 0.0, || {
            "horizon must be finite and > 0".into()
        })?;
        if let Some(h) = self.h {
            if h < 2 {
                return Err(Error::BlockSize(h));
            }
        }
        let (spec, boundaries) = self.model.resolve()?;
        spec.validate()?;
        for b in &boundaries {
            b.validate()?;
        }
        Ok(())
    }

    /// Grid step: the explicit `dt`, or the smallest expected duration
    /// `scale²·g⁻·g⁺/σ²` over both assets divided by `dt_steps`.
    pub fn grid_step(&self) -> Result<f64> {
        if let Some(dt) = self.dt {
            return Ok(dt);
        }
        let (spec, boundaries) = self.model.resolve()?;
        let shortest = (0..2)
            .map(|k| {
                let b = boundaries[k].magnitude_bounds();
                let vol = spec.reference_time_vol(k);
                self.tick_scale.powi(2) * b.lower * b.upper / (vol * vol)
            })
            .fold(f64::INFINITY, f64::min);
        ensure(shortest.is_finite() && shortest > 0.0, || {
            "cannot derive dt from a zero-volatility model; set dt explicitly".into()
        })?;
        let steps = (self.horizon / (shortest / self.dt_steps)).ceil();
        Ok(self.horizon / steps)
    }
}

/// Seed of replication `rep`, derived from the base seed by a splitmix step.
pub fn replication_seed(base: u64, rep: u64) -> u64 {
    let mut z = base ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Observations of both assets and the path's integrated covariation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDay {
    pub observations: [ObservationSeries; 2],
    pub truth: f64,
    pub steps: usize,
}

/// Simulate one path and sample both assets on the fly without storing it.
pub fn simulate_day(
    spec: &DiffusionSpec,
    boundaries: &[BoundarySpec; 2],
    tick_scale: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<SimulatedDay> {
    let mut sim = PathSimulator::new(spec, horizon, dt, seed)?;
    let mut rngs = [2u64, 3].map(|stream| {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        r.set_stream(stream);
        r
    });
    let p0 = sim.point();
    let [r1, r2] = &mut rngs;
    let mut samplers = [
        HbtSampler::new(&boundaries[0], tick_scale, p0.values[2], p0.values[0], r1)?,
        HbtSampler::new(&boundaries[1], tick_scale, p0.values[3], p0.values[1], r2)?,
    ];
    let mut truth = CovariationIntegral::default();
    truth.push(p0.time, p0.covariation_density());
    while let Some(p) = sim.advance() {
        for (k, (sampler, rng)) in samplers.iter_mut().zip(rngs.iter_mut()).enumerate() {
            sampler.observe(p.time, p.values[2 + k], p.values[k], rng)?;
        }
        truth.push(p.time, p.covariation_density());
    }
    let steps = sim.steps();
    let [s1, s2] = samplers;
    Ok(SimulatedDay {
        observations: [s1.finish(), s2.finish()],
        truth: truth.value(),
        steps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub truth: f64,
    pub hy: f64,
    pub bchy: f64,
    pub ab_hat: f64,
    pub av_hat: f64,
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationFailure {
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub replications: usize,
    pub failed: usize,
    pub hy_bias: f64,
    pub hy_rmse: f64,
    pub bchy_bias: f64,
    pub bchy_rmse: f64,
    /// `1 − RMSE_BCHY/RMSE_HY`.
    pub reduction: f64,
    pub quantile_levels: Vec<f64>,
    pub quantiles: Vec<f64>,
    pub statistic_mean: f64,
    pub statistic_std: f64,
    pub mean_truth: f64,
}

/// Table-style summary of the successful replications.
pub fn summarize(records: &[ReplicationRecord], failed: usize) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::EmptySeries);
    }
    let truth: Vec<f64> = records.iter().map(|r| r.truth).collect();
    let hy: Vec<f64> = records.iter().map(|r| r.hy).collect();
    let bchy: Vec<f64> = records.iter().map(|r| r.bchy).collect();
    let stat: Vec<f64> = records.iter().map(|r| r.statistic).collect();
    let bias = |est: &[f64]| est.iter().zip(&truth).map(|(e, t)| e - t).sum::<f64>() / est.len() as f64;
    let (hy_rmse, bchy_rmse) = (stats::rmse(&hy, &truth), stats::rmse(&bchy, &truth));
    Ok(Summary {
        replications: records.len(),
        failed,
        hy_bias: bias(&hy),
        hy_rmse,
        bchy_bias: bias(&bchy),
        bchy_rmse,
        reduction: 1.0 - bchy_rmse / hy_rmse,
        quantile_levels: QUANTILE_LEVELS.to_vec(),
        quantiles: stats::quantiles(&stat, &QUANTILE_LEVELS)?,
        statistic_mean: stats::mean(&stat),
        statistic_std: if stat.len() > 1 { stats::variance(&stat).sqrt() } else { 0.0 },
        mean_truth: stats::mean(&truth),
    })
}

/// Block counts pooled over the successful replications.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockMonitor {
    pub blocks: usize,
    pub degenerate_blocks: usize,
    pub clamped_blocks: usize,
    /// More than [`CLAMP_FLAG_RATE`] of the blocks had ρ̂ clamped.
    pub clamp_flagged: bool,
}

impl BlockMonitor {
    fn add(&mut self, r: &EstimationReport) {
        self.blocks += r.blocks;
        self.degenerate_blocks += r.degenerate_blocks;
        self.clamped_blocks += r.clamped_blocks;
        self.clamp_flagged = self.clamped_blocks as f64 > CLAMP_FLAG_RATE * self.blocks as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub dt: f64,
    pub records: Vec<ReplicationRecord>,
    pub failures: Vec<ReplicationFailure>,
    pub summary: Summary,
    pub monitor: BlockMonitor,
    pub histogram: Vec<HistogramBin>,
}

/// Estimate one replication; `Err` carries the reason it was excluded.
pub fn run_replication(
    config: &ExperimentConfig,
    spec: &DiffusionSpec,
    boundaries: &[BoundarySpec; 2],
    dt: f64,
    rep: usize,
) -> Result<(ReplicationRecord, EstimationReport)> {
    let seed = replication_seed(config.base_seed, rep as u64);
    let day = simulate_day(spec, boundaries, config.tick_scale, config.horizon, dt, seed)?;
    let opts = EstimateOptions {
        h: config.h,
        horizon: config.horizon,
        truth: Some(day.truth),
    };
    let [o1, o2] = &day.observations;
    let report = if config.symmetric {
        estimate_symmetric(o1, o2, &opts)?.combined
    } else {
        estimate(o1, o2, &opts)?
    };
    let record = ReplicationRecord {
        rep,
        truth: day.truth,
        hy: report.hy,
        bchy: report.bchy,
        ab_hat: report.ab_hat,
        av_hat: report.av_hat,
        statistic: report.statistic.ok_or(Error::UndefinedStatistic)?,
    };
    Ok((record, report))
}

/// Worker pool sized by `ENDOCOV_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV}={v} is not a positive integer")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with_progress(config, |_| {})
}

/// As [`run_experiment`], calling `progress` with the number of finished
/// replications (in completion order).
pub fn run_experiment_with_progress<F>(config: &ExperimentConfig, progress: F) -> Result<ExperimentResult>
where
    F: Fn(usize) + Sync,
{
    config.validate()?;
    let (spec, boundaries) = config.model.resolve()?;
    let dt = config.grid_step()?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let outcomes: Vec<Result<(ReplicationRecord, EstimationReport)>> = thread_pool()?.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let out = run_replication(config, &spec, &boundaries, dt, rep);
                progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
                out
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut monitor = BlockMonitor::default();
    for (rep, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok((record, report)) => {
                monitor.add(&report);
                records.push(record);
            }
            // Invalid input is a configuration problem, not a bad day.
            Err(e @ (Error::InvalidParameter(_) | Error::BoundaryOutOfBounds { .. })) => return Err(e),
            Err(e) => failures.push(ReplicationFailure {
                rep,
                reason: e.to_string(),
            }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_RATE * config.replications as f64 {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total: config.replications,
        });
    }
    let summary = summarize(&records, failures.len())?;
    let stat: Vec<f64> = records.iter().map(|r| r.statistic).collect();
    Ok(ExperimentResult {
        config: config.clone(),
        dt,
        histogram: stats::histogram(&stat, -4.0, 4.0, 32)?,
        records,
        failures,
        summary,
        monitor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hbt::{generate_observations, Asset};
    use crate::sde::{simulate_path, true_integrated_covariation};

    #[test]
    fn settings_validate() {
        for id in 1..=4 {
            let (spec, b) = setting(id).unwrap();
            spec.validate().unwrap();
            b.iter().for_each(|b| b.validate().unwrap());
        }
        assert!(setting(5).is_err());
    }

    #[test]
    fn default_grid_steps() {
        let c = ExperimentConfig::setting(1, 1, 0);
        // smallest expected duration: 6e-4·1e-4/0.02² = 1.5e-4
        assert_eq!(c.grid_step().unwrap(), 1.0 / 666_667.0);
        let c = ExperimentConfig {
            tick_scale: 0.5,
            ..c
        };
        assert_eq!(c.grid_step().unwrap(), 1.0 / 2_666_667.0);
    }

    #[test]
    fn seeds_differ_and_repeat() {
        assert_eq!(replication_seed(1, 2), replication_seed(1, 2));
        assert_ne!(replication_seed(1, 2), replication_seed(1, 3));
        assert_ne!(replication_seed(1, 2), replication_seed(2, 2));
    }

    #[test]
    fn streaming_day_matches_stored_path() {
        let (spec, b) = setting(1).unwrap();
        let day = simulate_day(&spec, &b, 1.0, 1.0, 1e-5, 77).unwrap();
        let path = simulate_path(&spec, 1.0, 1e-5, 77).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o1 = generate_observations(&path, &b[0], Asset::First, 1.0, &mut rng).unwrap();
        let o2 = generate_observations(&path, &b[1], Asset::Second, 1.0, &mut rng).unwrap();
        assert_eq!(day.observations, [o1, o2]);
        assert_eq!(day.truth, true_integrated_covariation(&path, 1.0).unwrap());
    }

    #[test]
    fn small_experiment_is_deterministic() {
        let config = ExperimentConfig {
            dt: Some(1e-5),
            ..ExperimentConfig::setting(1, 4, 9)
        };
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 4);
        assert!(a.summary.hy_rmse >= a.summary.hy_bias.abs());
        assert!(a.summary.quantiles.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a.histogram.iter().map(|b| b.count).sum::<u64>(), 4);
        let re = summarize(&a.records, 0).unwrap();
        assert_eq!(re, a.summary);
    }

    #[test]
    fn zero_volatility_days_all_fail() {
        let config = ExperimentConfig {
            model: Model::Custom {
                diffusion: DiffusionSpec::constant([0.0, 0.0], 0.0),
                boundaries: setting(1).unwrap().1,
            },
            dt: Some(1e-3),
            ..ExperimentConfig::setting(1, 3, 0)
        };
        assert!(matches!(
            run_experiment(&config),
            Err(Error::TooManyFailures { failed: 3, total: 3 })
        ));
        let no_dt = ExperimentConfig { dt: None, ..config };
        assert!(no_dt.grid_step().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let c = ExperimentConfig::setting(4, 10, 3);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), c);
        let minimal: ExperimentConfig = serde_json::from_str(r#"{"model":{"kind":"setting","id":2}}"#).unwrap();
        assert_eq!(minimal.replications, 252);
        assert_eq!(minimal.dt_steps, 100.0);
    }
}
