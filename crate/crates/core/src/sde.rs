//! Euler–Maruyama simulation of the four-dimensional process
//! `Y = (X1, X2, Xt1, Xt2)`: two log-prices and the two time processes that
//! drive their observation times.
//!
//! Volatility is either constant or Heston (full truncation). Finite-activity
//! jumps can be added to prices and variances; jump times are drawn exactly
//! and applied at the nearest grid point.
//!
//! The simulator is exposed both as a streaming [`PathSimulator`] (constant
//! memory, used by the Monte Carlo harness) and as a materialised
//! [`SamplePath`].

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// RNG stream reserved for jump times and sizes.
const JUMP_STREAM: u64 = 1;

/// Lower factor `L` of a correlation matrix `C = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationFactor {
    dim: usize,
    // row-major
    factor: Vec<f64>,
}

impl CorrelationFactor {
    pub fn new(corr: &DMatrix<f64>) -> Result<Self> {
        let dim = corr.nrows();
        if dim == 0 || corr.ncols() != dim {
            return Err(Error::InvalidCorrelation(format!(
                "expected a square matrix, got {}x{}",
                corr.nrows(),
                corr.ncols()
            )));
        }
        for i in 0..dim {
            if (corr[(i, i)] - 1.0).abs() > SYMMETRY_TOL {
                return Err(Error::InvalidCorrelation(format!(
                    "diagonal entry {i} is {}, expected 1",
                    corr[(i, i)]
                )));
            }
            for j in 0..dim {
                let c = corr[(i, j)];
                if !c.is_finite() || c.abs() > 1.0 + SYMMETRY_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "entry ({i},{j}) = {c} is not a correlation"
                    )));
                }
                if (c - corr[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidCorrelation(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        let eigen = corr.clone().symmetric_eigen();
        let min_eigenvalue = eigen.eigenvalues.min();
        if min_eigenvalue < -PSD_TOL {
            return Err(Error::NotPositiveSemiDefinite { min_eigenvalue });
        }

        let lower = match corr.clone().cholesky() {
            Some(chol) => chol.l(),
            // Singular but PSD: fall back to the symmetric square-root factor.
            None => {
                let sqrt_vals = eigen.eigenvalues.map(|v| v.max(0.0).sqrt());
                &eigen.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
            }
        };
        let mut factor = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                factor.push(lower[(i, j)]);
            }
        }
        Ok(Self { dim, factor })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.factor)
    }

    /// `out = L · iid`.
    #[inline]
    pub fn correlate(&self, iid: &[f64], out: &mut [f64]) {
        debug_assert_eq!(iid.len(), self.dim);
        for (i, o) in out.iter_mut().enumerate().take(self.dim) {
            let row = &self.factor[i * self.dim..(i + 1) * self.dim];
            *o = row.iter().zip(iid).map(|(l, z)| l * z).sum();
        }
    }
}

/// Apply the correlation structure `corr` to a flat stream of IID standard
/// normals, `corr.nrows()` at a time.
pub fn correlate_increments(corr: &DMatrix<f64>, iid_normals: &[f64]) -> Result<Vec<f64>> {
    let factor = CorrelationFactor::new(corr)?;
    let dim = factor.dim();
    if iid_normals.len() % dim != 0 {
        return Err(Error::LengthMismatch {
            left: iid_normals.len(),
            right: dim,
        });
    }
    let mut out = vec![0.0; iid_normals.len()];
    for (chunk, dst) in iid_normals.chunks(dim).zip(out.chunks_mut(dim)) {
        factor.correlate(chunk, dst);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VolModel {
    Constant {
        sigma: [f64; 2],
    },
    /// `dv = κ(σ̄² − v)dt + δ√v dB̃`, `d⟨B, B̃⟩ = leverage·dt`.
    Heston {
        kappa: [f64; 2],
        long_run_vol: [f64; 2],
        vol_of_vol: [f64; 2],
        leverage: [f64; 2],
        initial_variance: [f64; 2],
    },
}

/// How the time process of one asset relates to its price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeLink {
    SameAsPrice,
    /// Own Brownian driver with constant volatility; `corr` holds the
    /// correlations with (W1, W2, the other asset's time driver).
    Separate { vol: f64, corr: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JumpSize {
    /// `±magnitude` with probability 1/2 each.
    Symmetric { magnitude: f64 },
    Normal { mean: f64, std: f64 },
}

impl JumpSize {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpSize::Symmetric { magnitude } => {
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            JumpSize::Normal { mean, std } => {
                Normal::new(mean, std).expect("validated").sample(rng)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            JumpSize::Symmetric { magnitude } => {
                ensure(magnitude.is_finite(), || "jump magnitude must be finite".into())
            }
            JumpSize::Normal { mean, std } => ensure(
                mean.is_finite() && std.is_finite() && std >= 0.0,
                || "normal jump law needs finite mean and std >= 0".into(),
            ),
        }
    }
}

/// Poisson jumps in the two prices and the two variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    pub price_intensity: [f64; 2],
    pub price_size: JumpSize,
    #[serde(default)]
    pub variance_intensity: [f64; 2],
    #[serde(default = "JumpSpec::no_variance_jump")]
    pub variance_size: JumpSize,
}

impl JumpSpec {
    fn no_variance_jump() -> JumpSize {
        JumpSize::Symmetric { magnitude: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    /// Drift of (X1, X2, Xt1, Xt2) per unit time. Time-process drifts only
    /// matter for [`TimeLink::Separate`].
    #[serde(default)]
    pub drift: [f64; 4],
    pub vol_model: VolModel,
    pub price_correlation: f64,
    #[serde(default = "DiffusionSpec::same_as_price")]
    pub time_link: [TimeLink; 2],
    #[serde(default)]
    pub jumps: Option<JumpSpec>,
    #[serde(default)]
    pub initial: [f64; 4],
}

impl DiffusionSpec {
    fn same_as_price() -> [TimeLink; 2] {
        [TimeLink::SameAsPrice, TimeLink::SameAsPrice]
    }

    /// Driftless constant-volatility prices that are their own time processes.
    pub fn constant(sigma: [f64; 2], rho: f64) -> Self {
        Self {
            drift: [0.0; 4],
            vol_model: VolModel::Constant { sigma },
            price_correlation: rho,
            time_link: Self::same_as_price(),
            jumps: None,
            initial: [0.0; 4],
        }
    }

    /// Typical volatility level of each price: σ, or σ̄ under Heston.
    pub fn reference_vol(&self) -> [f64; 2] {
        match &self.vol_model {
            VolModel::Constant { sigma } => *sigma,
            VolModel::Heston { long_run_vol, .. } => *long_run_vol,
        }
    }

    /// Typical volatility of the time process of asset `k` (0-based).
    pub fn reference_time_vol(&self, k: usize) -> f64 {
        match &self.time_link[k] {
            TimeLink::SameAsPrice => self.reference_vol()[k],
            TimeLink::Separate { vol, .. } => *vol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.drift.iter().all(|d| d.is_finite()), || {
            "drift must be finite".into()
        })?;
        ensure(self.initial.iter().all(|d| d.is_finite()), || {
            "initial values must be finite".into()
        })?;
        let rho = self.price_correlation;
        ensure(rho.is_finite() && rho.abs() < 1.0, || {
            format!("price correlation {rho} must lie in (-1, 1)")
        })?;
        match &self.vol_model {
            VolModel::Constant { sigma } => ensure(
                sigma.iter().all(|s| s.is_finite() && *s >= 0.0),
                || "constant volatilities must be finite and >= 0".into(),
            )?,
            VolModel::Heston {
                kappa,
                long_run_vol,
                vol_of_vol,
                leverage,
                initial_variance,
            } => {
                for k in 0..2 {
                    for (name, v) in [
                        ("kappa", kappa[k]),
                        ("long_run_vol", long_run_vol[k]),
                        ("vol_of_vol", vol_of_vol[k]),
                        ("initial_variance", initial_variance[k]),
                    ] {
                        ensure(v.is_finite() && v > 0.0, || {
                            format!("Heston {name}[{k}] = {v} must be finite and > 0")
                        })?;
                    }
                    ensure(leverage[k].is_finite() && leverage[k].abs() < 1.0, || {
                        format!("Heston leverage[{k}] must lie in (-1, 1)")
                    })?;
                }
            }
        }
        for (k, link) in self.time_link.iter().enumerate() {
            if let TimeLink::Separate { vol, corr } = link {
                ensure(vol.is_finite() && *vol >= 0.0, || {
                    format!("time process {k} vol must be finite and >= 0")
                })?;
                ensure(corr.iter().all(|c| c.is_finite() && c.abs() <= 1.0), || {
                    format!("time process {k} correlations must lie in [-1, 1]")
                })?;
            }
        }
        if let (TimeLink::Separate { corr: a, .. }, TimeLink::Separate { corr: b, .. }) =
            (&self.time_link[0], &self.time_link[1])
        {
            ensure((a[2] - b[2]).abs() <= SYMMETRY_TOL, || {
                "time-process cross correlations disagree".into()
            })?;
        }
        if let Some(j) = &self.jumps {
            ensure(
                j.price_intensity
                    .iter()
                    .chain(&j.variance_intensity)
                    .all(|l| l.is_finite() && *l >= 0.0),
                || "jump intensities must be finite and >= 0".into(),
            )?;
            j.price_size.validate()?;
            j.variance_size.validate()?;
        }
        Ok(())
    }

    /// Correlation matrix of the active Brownian drivers, in the order
    /// (W1, W2, [Wt1], [Wt2], [B̃1, B̃2]).
    pub fn driver_correlation(&self) -> DMatrix<f64> {
        let layout = DriverLayout::new(self);
        let mut c = DMatrix::identity(layout.dim, layout.dim);
        c[(0, 1)] = self.price_correlation;
        c[(1, 0)] = self.price_correlation;
        for k in 0..2 {
            if let (Some(ti), TimeLink::Separate { corr, .. }) = (layout.time[k], &self.time_link[k])
            {
                for p in 0..2 {
                    c[(ti, p)] = corr[p];
                    c[(p, ti)] = corr[p];
                }
                if let Some(other) = layout.time[1 - k] {
                    c[(ti, other)] = corr[2];
                    c[(other, ti)] = corr[2];
                }
            }
        }
        if let VolModel::Heston { leverage, .. } = &self.vol_model {
            for k in 0..2 {
                let vi = layout.var[k].expect("heston has variance drivers");
                c[(vi, k)] = leverage[k];
                c[(k, vi)] = leverage[k];
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy)]
struct DriverLayout {
    dim: usize,
    time: [Option<usize>; 2],
    var: [Option<usize>; 2],
}

impl DriverLayout {
    fn new(spec: &DiffusionSpec) -> Self {
        let mut dim = 2;
        let mut time = [None; 2];
        for (k, link) in spec.time_link.iter().enumerate() {
            if matches!(link, TimeLink::Separate { .. }) {
                time[k] = Some(dim);
                dim += 1;
            }
        }
        let mut var = [None; 2];
        if matches!(spec.vol_model, VolModel::Heston { .. }) {
            var = [Some(dim), Some(dim + 1)];
            dim += 2;
        }
        Self { dim, time, var }
    }
}

/// A jump applied at grid point `index`; `process` is 0/1 for the prices
/// and 2/3 for the variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpMark {
    pub index: usize,
    pub process: usize,
    pub size: f64,
}

/// State of the simulation at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub time: f64,
    /// (X1, X2, Xt1, Xt2)
    pub values: [f64; 4],
    pub spot_vol: [f64; 2],
    pub spot_rho: f64,
}

impl GridPoint {
    /// Instantaneous covariation density σ1·σ2·ρ.
    pub fn covariation_density(&self) -> f64 {
        self.spot_vol[0] * self.spot_vol[1] * self.spot_rho
    }
}

/// Number of grid steps for `horizon` at step `dt`.
pub fn grid_steps(horizon: f64, dt: f64) -> Result<usize> {
    ensure(horizon.is_finite() && horizon > 0.0, || {
        format!("horizon {horizon} must be finite and > 0")
    })?;
    ensure(dt.is_finite() && dt > 0.0, || format!("dt {dt} must be finite and > 0"))?;
    ensure(dt < horizon, || format!("dt {dt} must be smaller than the horizon {horizon}"))?;
    Ok((horizon / dt + 1e-9).floor() as usize)
}

/// Streaming Euler–Maruyama simulator. Deterministic in (spec, horizon, dt, seed).
#[derive(Debug, Clone)]
pub struct PathSimulator {
    spec: DiffusionSpec,
    dt: f64,
    sqrt_dt: f64,
    steps: usize,
    index: usize,
    x: [f64; 4],
    var: [f64; 2],
    layout: DriverLayout,
    factor: CorrelationFactor,
    rng: ChaCha8Rng,
    jumps: Vec<JumpMark>,
    next_jump: usize,
    iid: Vec<f64>,
    w: Vec<f64>,
}

impl PathSimulator {
    pub fn new(spec: &DiffusionSpec, horizon: f64, dt: f64, seed: u64) -> Result<Self> {
        spec.validate()?;
        let steps = grid_steps(horizon, dt)?;
        let layout = DriverLayout::new(spec);
        let factor = CorrelationFactor::new(&spec.driver_correlation())?;

        let mut jump_rng = ChaCha8Rng::seed_from_u64(seed);
        jump_rng.set_stream(JUMP_STREAM);
        let jumps = match &spec.jumps {
            Some(j) => schedule_jumps(j, horizon, dt, steps, &mut jump_rng),
            None => Vec::new(),
        };

        let var = match &spec.vol_model {
            VolModel::Constant { .. } => [0.0; 2],
            VolModel::Heston {
                initial_variance, ..
            } => *initial_variance,
        };
        let mut x = spec.initial;
        for k in 0..2 {
            if spec.time_link[k] == TimeLink::SameAsPrice {
                x[2 + k] = x[k];
            }
        }
        Ok(Self {
            spec: spec.clone(),
            dt,
            sqrt_dt: dt.sqrt(),
            steps,
            index: 0,
            x,
            var,
            layout,
            iid: vec![0.0; layout.dim],
            w: vec![0.0; layout.dim],
            factor,
            rng: ChaCha8Rng::seed_from_u64(seed),
            jumps,
            next_jump: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn jump_marks(&self) -> &[JumpMark] {
        &self.jumps
    }

    #[inline]
    fn spot_vol(&self) -> [f64; 2] {
        match &self.spec.vol_model {
            VolModel::Constant { sigma } => *sigma,
            VolModel::Heston { .. } => [self.var[0].max(0.0).sqrt(), self.var[1].max(0.0).sqrt()],
        }
    }

    pub fn point(&self) -> GridPoint {
        GridPoint {
            index: self.index,
            time: self.index as f64 * self.dt,
            values: self.x,
            spot_vol: self.spot_vol(),
            spot_rho: self.spec.price_correlation,
        }
    }

    /// Advance one grid step; `None` once the horizon is reached.
    pub fn advance(&mut self) -> Option<GridPoint> {
        if self.index >= self.steps {
            return None;
        }
        let vol = self.spot_vol();
        for z in self.iid.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
        self.factor.correlate(&self.iid, &mut self.w);

        let (dt, sqrt_dt) = (self.dt, self.sqrt_dt);
        let mu = self.spec.drift;
        for k in 0..2 {
            self.x[k] += mu[k] * dt + vol[k] * sqrt_dt * self.w[k];
        }
        for k in 0..2 {
            if let (Some(ti), TimeLink::Separate { vol: tv, .. }) =
                (self.layout.time[k], &self.spec.time_link[k])
            {
                self.x[2 + k] += mu[2 + k] * dt + tv * sqrt_dt * self.w[ti];
            }
        }
        if let VolModel::Heston {
            kappa,
            long_run_vol,
            vol_of_vol,
            ..
        } = &self.spec.vol_model
        {
            for k in 0..2 {
                let vi = self.layout.var[k].expect("heston layout");
                let vp = self.var[k].max(0.0);
                self.var[k] += kappa[k] * (long_run_vol[k] * long_run_vol[k] - vp) * dt
                    + vol_of_vol[k] * vp.sqrt() * sqrt_dt * self.w[vi];
            }
        }
        self.index += 1;

        while let Some(jump) = self.jumps.get(self.next_jump) {
            if jump.index != self.index {
                break;
            }
            match jump.process {
                p @ (0 | 1) => self.x[p] += jump.size,
                p => self.var[p - 2] += jump.size,
            }
            self.next_jump += 1;
        }
        for k in 0..2 {
            if self.spec.time_link[k] == TimeLink::SameAsPrice {
                self.x[2 + k] = self.x[k];
            }
        }
        Some(self.point())
    }
}

fn schedule_jumps<R: Rng>(
    spec: &JumpSpec,
    horizon: f64,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> Vec<JumpMark> {
    let mut marks = Vec::new();
    let intensities = [
        spec.price_intensity[0],
        spec.price_intensity[1],
        spec.variance_intensity[0],
        spec.variance_intensity[1],
    ];
    for (process, &lambda) in intensities.iter().enumerate() {
        if lambda <= 0.0 {
            continue;
        }
        let size = if process < 2 {
            &spec.price_size
        } else {
            &spec.variance_size
        };
        let gaps = Exp::new(lambda).expect("positive intensity");
        let mut t = 0.0;
        loop {
            t += gaps.sample(rng);
            if t > horizon {
                break;
            }
            let index = ((t / dt).round() as usize).clamp(1, steps);
            marks.push(JumpMark {
                index,
                process,
                size: size.sample(rng),
            });
        }
    }
    marks.sort_by_key(|m| (m.index, m.process));
    marks
}

/// A fully materialised simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dt: f64,
    pub values: Vec<[f64; 4]>,
    pub spot_vol: Vec<[f64; 2]>,
    pub spot_rho: Vec<f64>,
    pub jump_marks: Vec<JumpMark>,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        (self.len().saturating_sub(1)) as f64 * self.dt
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 * self.dt
    }

    pub fn point(&self, index: usize) -> GridPoint {
        GridPoint {
            index,
            time: self.time(index),
            values: self.values[index],
            spot_vol: self.spot_vol[index],
            spot_rho: self.spot_rho[index],
        }
    }

    pub fn points(&self) -> impl Iterator<Item = GridPoint> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Build a path from explicit grid values with a constant-volatility,
    /// constant-correlation annotation. Handy for deterministic inputs.
    pub fn from_values(dt: f64, values: Vec<[f64; 4]>, spot_vol: [f64; 2], rho: f64) -> Self {
        let n = values.len();
        Self {
            dt,
            values,
            spot_vol: vec![spot_vol; n],
            spot_rho: vec![rho; n],
            jump_marks: Vec::new(),
        }
    }
}

pub fn simulate_path(spec: &DiffusionSpec, horizon: f64, dt: f64, seed: u64) -> Result<SamplePath> {
    let mut sim = PathSimulator::new(spec, horizon, dt, seed)?;
    let n = sim.steps() + 1;
    let mut values = Vec::with_capacity(n);
    let mut spot_vol = Vec::with_capacity(n);
    let mut spot_rho = Vec::with_capacity(n);
    let mut push = |p: GridPoint| {
        values.push(p.values);
        spot_vol.push(p.spot_vol);
        spot_rho.push(p.spot_rho);
    };
    push(sim.point());
    while let Some(p) = sim.advance() {
        push(p);
    }
    Ok(SamplePath {
        dt,
        values,
        spot_vol,
        spot_rho,
        jump_marks: sim.jump_marks().to_vec(),
    })
}

/// Trapezoidal accumulator of ∫σ1σ2ρ ds over consecutive grid points.
#[derive(Debug, Clone, Copy, Default)]
pub struct CovariationIntegral {
    last: Option<(f64, f64)>,
    value: f64,
}

impl CovariationIntegral {
    pub fn push(&mut self, time: f64, density: f64) {
        if let Some((t0, d0)) = self.last {
            self.value += 0.5 * (d0 + density) * (time - t0);
        }
        self.last = Some((time, density));
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

/// ⟨X1, X2⟩_t = ∫₀ᵗ σ1σ2ρ ds by the trapezoidal rule on the path grid.
pub fn true_integrated_covariation(path: &SamplePath, t: f64) -> Result<f64> {
    let horizon = path.horizon();
    ensure(
        t.is_finite() && t >= 0.0 && t <= horizon * (1.0 + 1e-12),
        || format!("t = {t} outside [0, {horizon}]"),
    )?;
    let mut acc = CovariationIntegral::default();
    for p in path.points() {
        if p.time <= t {
            acc.push(p.time, p.covariation_density());
            continue;
        }
        // Partial last interval: interpolate the density linearly.
        let prev = path.point(p.index - 1);
        let w = (t - prev.time) / path.dt;
        let d = prev.covariation_density() * (1.0 - w) + p.covariation_density() * w;
        acc.push(t, d);
        break;
    }
    Ok(acc.value())
}
