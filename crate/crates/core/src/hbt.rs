//! Observation times generated by first passage of a time process through
//! up/down boundaries.
//!
//! From the last observation, the increment of the asset's time process is
//! tracked; as soon as it reaches `α·u` or `α·(−d)` a new observation is
//! emitted and the increment restarts from zero. The boundary variants cover
//! constant barriers, tick barriers, random jump sizes, uncertainty zones
//! (symmetric or asymmetric friction), irregular price grids and
//! constant-barrier ACD-style time processes.
//!
//! Exits are detected at grid resolution: the observation is stamped at the
//! first grid point whose increment lies on or beyond a barrier.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::sde::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Asset {
    First,
    Second,
}

impl Asset {
    pub fn index(self) -> usize {
        match self {
            Asset::First => 0,
            Asset::Second => 1,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Asset::First),
            2 => Ok(Asset::Second),
            _ => Err(Error::InvalidParameter(format!("asset must be 1 or 2, got {n}"))),
        }
    }
}

/// Bounded law of the jump size `L ≥ 1` in ticks:
/// `P(L = k) = probabilities[k − 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickSizeLaw {
    pub probabilities: Vec<f64>,
}

impl Default for TickSizeLaw {
    fn default() -> Self {
        Self::one()
    }
}

impl TickSizeLaw {
    /// `L ≡ 1`.
    pub fn one() -> Self {
        Self {
            probabilities: vec![1.0],
        }
    }

    pub fn max(&self) -> u32 {
        self.probabilities.len() as u32
    }

    fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(k, _)| k as u32 + 1)
    }

    fn validate(&self) -> Result<()> {
        ensure(!self.probabilities.is_empty(), || "tick-size law is empty".into())?;
        ensure(
            self.probabilities.iter().all(|p| p.is_finite() && *p >= 0.0),
            || "tick-size probabilities must be finite and >= 0".into(),
        )?;
        let total: f64 = self.probabilities.iter().sum();
        ensure((total - 1.0).abs() < 1e-9, || {
            format!("tick-size probabilities sum to {total}, expected 1")
        })
    }

    /// Degenerate laws consume no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.probabilities.len() == 1 {
            return 1;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return k as u32 + 1;
            }
        }
        self.support().last().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryVariant {
    /// Up barrier `up`, down barrier `−down` (both magnitudes positive).
    ConstantBarriers { up: f64, down: f64 },
    /// Barriers at `±alpha`.
    TickBarriers { alpha: f64 },
    /// Barriers at `±L·alpha`, `L` redrawn after every observation.
    JumpSizeBarriers {
        alpha: f64,
        #[serde(default)]
        jump_ticks: TickSizeLaw,
    },
    /// Observed price is the efficient price rounded to the `alpha` grid; a
    /// move of `L` ticks needs the price to travel `L − 1/2 + η±` ticks from
    /// the current rounded level.
    UncertaintyZones {
        alpha: f64,
        eta_up: f64,
        eta_down: f64,
        #[serde(default)]
        jump_ticks: TickSizeLaw,
    },
    /// Observation whenever the price reaches a level of the grid other than
    /// the current one.
    IrregularGrid { levels: Vec<f64> },
    /// Constant barrier pair on a (typically separate) time process.
    Acd { up: f64, down: f64 },
}

impl BoundaryVariant {
    pub fn uncertainty_zones(alpha: f64, eta: f64, jump_ticks: TickSizeLaw) -> Self {
        Self::UncertaintyZones {
            alpha,
            eta_up: eta,
            eta_down: eta,
            jump_ticks,
        }
    }

    /// Every barrier magnitude the variant can produce at unit scale.
    fn magnitudes(&self) -> Vec<f64> {
        match self {
            Self::ConstantBarriers { up, down } | Self::Acd { up, down } => vec![*up, *down],
            Self::TickBarriers { alpha } => vec![*alpha],
            Self::JumpSizeBarriers { alpha, jump_ticks } => {
                jump_ticks.support().map(|l| l as f64 * alpha).collect()
            }
            Self::UncertaintyZones {
                alpha,
                eta_up,
                eta_down,
                jump_ticks,
            } => jump_ticks
                .support()
                .flat_map(|l| {
                    let l = l as f64;
                    [l * alpha, (l - 1.0 + eta_up + eta_down) * alpha]
                })
                .collect(),
            Self::IrregularGrid { levels } => levels.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::JumpSizeBarriers { jump_ticks, .. } => jump_ticks.validate()?,
            Self::UncertaintyZones {
                eta_up,
                eta_down,
                jump_ticks,
                ..
            } => {
                jump_ticks.validate()?;
                for eta in [eta_up, eta_down] {
                    ensure(eta.is_finite() && *eta > 0.0 && *eta < 1.0, || {
                        format!("friction parameter {eta} must lie in (0, 1)")
                    })?;
                }
            }
            Self::IrregularGrid { levels } => {
                ensure(levels.len() >= 2, || "irregular grid needs at least two levels".into())?;
                ensure(levels.iter().all(|p| p.is_finite()), || {
                    "grid levels must be finite".into()
                })?;
                if let Some(i) = levels.windows(2).position(|w| w[1] <= w[0]) {
                    return Err(Error::UnsortedTimes { index: i + 1 });
                }
            }
            _ => {}
        }
        for m in self.magnitudes() {
            ensure(m.is_finite() && m > 0.0, || {
                format!("barrier magnitude {m} must be finite and > 0")
            })?;
        }
        Ok(())
    }
}

/// Closed interval `[g⁻, g⁺]` every unit-scale barrier magnitude must lie in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeBounds {
    pub lower: f64,
    pub upper: f64,
}

impl MagnitudeBounds {
    fn check(&self, magnitude: f64) -> Result<()> {
        if magnitude < self.lower * (1.0 - 1e-12) || magnitude > self.upper * (1.0 + 1e-12) {
            Err(Error::BoundaryOutOfBounds {
                magnitude,
                lower: self.lower,
                upper: self.upper,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySpec {
    #[serde(flatten)]
    pub variant: BoundaryVariant,
    /// Defaults to the tightest interval containing the variant's magnitudes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<MagnitudeBounds>,
}

impl From<BoundaryVariant> for BoundarySpec {
    fn from(variant: BoundaryVariant) -> Self {
        Self {
            variant,
            bounds: None,
        }
    }
}

impl BoundarySpec {
    pub fn constant(up: f64, down: f64) -> Self {
        BoundaryVariant::ConstantBarriers { up, down }.into()
    }

    pub fn magnitude_bounds(&self) -> MagnitudeBounds {
        self.bounds.unwrap_or_else(|| {
            let m = self.variant.magnitudes();
            MagnitudeBounds {
                lower: m.iter().copied().fold(f64::INFINITY, f64::min),
                upper: m.iter().copied().fold(0.0, f64::max),
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.variant.validate()?;
        let bounds = self.magnitude_bounds();
        ensure(
            bounds.lower > 0.0 && bounds.lower <= bounds.upper && bounds.upper.is_finite(),
            || format!("need 0 < g- <= g+ < inf, got {bounds:?}"),
        )?;
        for m in self.variant.magnitudes() {
            bounds.check(m)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationSeries {
    pub times: Vec<f64>,
    pub observed: Vec<f64>,
    pub latent: Vec<f64>,
    /// Direction (±1) of the last move, recorded for uncertainty zones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Vec<i8>>,
}

impl ObservationSeries {
    /// A series with observed = latent prices.
    pub fn new(times: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        let s = Self {
            latent: prices.clone(),
            observed: prices,
            times,
            direction: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Observations after the initial point.
    pub fn count(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.observed.len() != self.times.len() {
            return Err(Error::LengthMismatch {
                left: self.times.len(),
                right: self.observed.len(),
            });
        }
        if self.latent.len() != self.times.len() {
            return Err(Error::LengthMismatch {
                left: self.times.len(),
                right: self.latent.len(),
            });
        }
        match self.times.first() {
            None => return Err(Error::EmptySeries),
            Some(t0) if *t0 != 0.0 => {
                return Err(Error::InvalidParameter(format!(
                    "series must start at time 0, starts at {t0}"
                )))
            }
            _ => {}
        }
        if let Some(i) = self.times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::UnsortedTimes { index: i + 1 });
        }
        Ok(())
    }

    /// Observations strictly before `t`.
    pub fn truncated(&self, t: f64) -> Self {
        let n = self.times.partition_point(|&s| s < t);
        Self {
            times: self.times[..n].to_vec(),
            observed: self.observed[..n].to_vec(),
            latent: self.latent[..n].to_vec(),
            direction: self.direction.as_ref().map(|d| d[..n].to_vec()),
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "observed", "latent"])?;
        for i in 0..self.len() {
            w.write_record([
                self.times[i].to_string(),
                self.observed[i].to_string(),
                self.latent[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            time: f64,
            observed: f64,
            latent: f64,
        }
        let mut s = Self::default();
        for (i, row) in csv::Reader::from_reader(reader).deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::TickFile {
                row: i + 1,
                reason: e.to_string(),
            })?;
            s.times.push(row.time);
            s.observed.push(row.observed);
            s.latent.push(row.latent);
        }
        s.validate()?;
        Ok(s)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Fixed,
    JumpSize {
        tick: f64,
        law: TickSizeLaw,
    },
    Zones {
        tick: f64,
        eta_up: f64,
        eta_down: f64,
        law: TickSizeLaw,
        /// Observed price in ticks.
        level: i64,
        /// Size in ticks of the pending move.
        pending: u32,
    },
    Grid {
        levels: Vec<f64>,
        current: usize,
    },
}

/// Online HBT sampler: feed it grid points in time order.
#[derive(Debug, Clone)]
pub struct HbtSampler {
    rule: Rule,
    bounds: MagnitudeBounds,
    scale: f64,
    anchor: f64,
    up: f64,
    down: f64,
    active: bool,
    series: ObservationSeries,
}

impl HbtSampler {
    /// Start a sampler at time 0 with the given time-process level and price.
    pub fn new<R: Rng + ?Sized>(
        spec: &BoundarySpec,
        scale: f64,
        time_level: f64,
        price: f64,
        rng: &mut R,
    ) -> Result<Self> {
        spec.validate()?;
        ensure(scale.is_finite() && scale > 0.0, || {
            format!("tick scale {scale} must be finite and > 0")
        })?;
        let mut sampler = Self {
            rule: Rule::Fixed,
            bounds: spec.magnitude_bounds(),
            scale,
            anchor: time_level,
            up: 0.0,
            down: 0.0,
            active: true,
            series: ObservationSeries::default(),
        };
        let mut observed = price;
        let mut direction = None;
        match &spec.variant {
            BoundaryVariant::ConstantBarriers { up, down } | BoundaryVariant::Acd { up, down } => {
                sampler.set_barriers(*up, *down)?;
            }
            BoundaryVariant::TickBarriers { alpha } => sampler.set_barriers(*alpha, *alpha)?,
            BoundaryVariant::JumpSizeBarriers { alpha, jump_ticks } => {
                let l = jump_ticks.sample(rng) as f64;
                sampler.set_barriers(l * alpha, l * alpha)?;
                sampler.rule = Rule::JumpSize {
                    tick: *alpha,
                    law: jump_ticks.clone(),
                };
            }
            BoundaryVariant::UncertaintyZones {
                alpha,
                eta_up,
                eta_down,
                jump_ticks,
            } => {
                // No previous move yet: symmetric ±L·α barriers for the first event.
                let pending = jump_ticks.sample(rng);
                let l = pending as f64;
                sampler.set_barriers(l * alpha, l * alpha)?;
                let level = (price / (alpha * scale)).round() as i64;
                observed = level as f64 * alpha * scale;
                direction = Some(vec![0]);
                sampler.rule = Rule::Zones {
                    tick: *alpha,
                    eta_up: *eta_up,
                    eta_down: *eta_down,
                    law: jump_ticks.clone(),
                    level,
                    pending,
                };
            }
            BoundaryVariant::IrregularGrid { levels } => {
                let scaled: Vec<f64> = levels.iter().map(|p| p * scale).collect();
                let current = nearest_level(&scaled, time_level);
                sampler.rule = Rule::Grid {
                    levels: scaled,
                    current,
                };
                sampler.set_grid_barriers();
            }
        }
        sampler.series = ObservationSeries {
            times: vec![0.0],
            observed: vec![observed],
            latent: vec![price],
            direction,
        };
        Ok(sampler)
    }

    /// Unit-scale magnitudes → scaled barriers, checked against `[g⁻, g⁺]`.
    fn set_barriers(&mut self, up: f64, down: f64) -> Result<()> {
        self.bounds.check(up)?;
        self.bounds.check(down)?;
        self.up = up * self.scale;
        self.down = down * self.scale;
        Ok(())
    }

    fn set_grid_barriers(&mut self) {
        if let Rule::Grid { levels, current } = &self.rule {
            match (current.checked_sub(1), levels.get(current + 1)) {
                (Some(below), Some(above)) => {
                    self.up = above - self.anchor;
                    self.down = self.anchor - levels[below];
                }
                // Off the end of the grid: no further level can be reached.
                _ => self.active = false,
            }
        }
    }

    pub fn series(&self) -> &ObservationSeries {
        &self.series
    }

    /// Whether the sampler can still emit observations.
    pub fn is_active(&self) -> bool {
        self.active
    }

    /// Feed the next grid point; returns `true` if it produced an observation.
    #[inline]
    pub fn observe<R: Rng + ?Sized>(
        &mut self,
        time: f64,
        time_level: f64,
        price: f64,
        rng: &mut R,
    ) -> Result<bool> {
        if !self.active {
            return Ok(false);
        }
        let inc = time_level - self.anchor;
        if inc < self.up && inc > -self.down {
            return Ok(false);
        }
        self.emit(time, time_level, price, inc >= self.up, rng)?;
        Ok(true)
    }

    fn emit<R: Rng + ?Sized>(
        &mut self,
        time: f64,
        time_level: f64,
        price: f64,
        went_up: bool,
        rng: &mut R,
    ) -> Result<()> {
        self.anchor = time_level;
        let mut observed = price;
        let sign: i8 = if went_up { 1 } else { -1 };
        match &mut self.rule {
            Rule::Fixed => {}
            Rule::JumpSize { tick, law } => {
                let l = law.sample(rng) as f64 * *tick;
                self.bounds.check(l)?;
                self.up = l * self.scale;
                self.down = l * self.scale;
            }
            Rule::Zones {
                tick,
                eta_up,
                eta_down,
                law,
                level,
                pending,
            } => {
                *level += sign as i64 * *pending as i64;
                observed = *level as f64 * *tick * self.scale;

                *pending = law.sample(rng);
                let l = *pending as f64;
                let continuation = l * *tick;
                let reversal = (l - 1.0 + *eta_up + *eta_down) * *tick;
                let (up, down) = if went_up {
                    (continuation, reversal)
                } else {
                    (reversal, continuation)
                };
                self.bounds.check(up)?;
                self.bounds.check(down)?;
                self.up = up * self.scale;
                self.down = down * self.scale;
            }
            Rule::Grid { current, .. } => {
                if went_up {
                    *current += 1;
                } else {
                    *current -= 1;
                }
            }
        }
        if matches!(self.rule, Rule::Grid { .. }) {
            self.set_grid_barriers();
        }
        self.series.times.push(time);
        self.series.latent.push(price);
        self.series.observed.push(observed);
        if let Some(d) = self.series.direction.as_mut() {
            d.push(sign);
        }
        Ok(())
    }

    pub fn finish(self) -> ObservationSeries {
        self.series
    }
}

fn nearest_level(levels: &[f64], x: f64) -> usize {
    let i = levels.partition_point(|&p| p < x);
    match i {
        0 => 0,
        i if i == levels.len() => levels.len() - 1,
        i if (levels[i] - x) < (x - levels[i - 1]) => i,
        i => i - 1,
    }
}

/// Run the HBT sampler for one asset over a stored path.
///
/// `rng` drives the random jump sizes `L`; deterministic variants never
/// touch it.
pub fn generate_observations<R: Rng + ?Sized>(
    path: &SamplePath,
    boundary: &BoundarySpec,
    asset: Asset,
    tick_scale: f64,
    rng: &mut R,
) -> Result<ObservationSeries> {
    ensure(!path.is_empty(), || "empty path".into())?;
    let k = asset.index();
    let first = path.values[0];
    let mut sampler = HbtSampler::new(boundary, tick_scale, first[2 + k], first[k], rng)?;
    for i in 1..path.len() {
        let v = &path.values[i];
        sampler.observe(path.time(i), v[2 + k], v[k], rng)?;
    }
    Ok(sampler.finish())
}

/// Observation-count ratio between a coarse-tick and a fine-tick series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub coarse_count: usize,
    pub fine_count: usize,
    pub ratio: f64,
}

/// Compare observation counts of series generated at ticks `α` and `α/2`;
/// the counts grow like `α⁻²`, so the ratio should be close to 4.
pub fn expected_observation_count_check(
    coarse: &ObservationSeries,
    fine: &ObservationSeries,
) -> Result<ScalingReport> {
    let (coarse_count, fine_count) = (coarse.count(), fine.count());
    if coarse_count == 0 || fine_count == 0 {
        return Err(Error::EmptySeries);
    }
    Ok(ScalingReport {
        coarse_count,
        fine_count,
        ratio: fine_count as f64 / coarse_count as f64,
    })
}
