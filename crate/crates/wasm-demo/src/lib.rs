//! Browser bindings for the endocov estimators.
//!
//! Each export takes plain arguments and returns a JSON string. The
//! `*_json` functions hold the logic and are callable natively.

use endocov::bias::{estimate, EstimateOptions};
use endocov::harness::{
    replication_seed, run_replication, setting, simulate_day, summarize, ExperimentConfig,
};
use endocov::io::read_tick_file;
use endocov::stats::histogram;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Upper bound on demo replications; the page runs on one thread.
pub const MAX_DEMO_REPS: usize = 200;

#[derive(Serialize)]
struct Series<'a> {
    times: &'a [f64],
    observed: &'a [f64],
}

#[derive(Serialize)]
struct SimulatedDay<'a> {
    truth: f64,
    dt: f64,
    assets: [Series<'a>; 2],
    csv: [String; 2],
}

fn config(setting_id: u8, reps: usize, seed: u64, tick_scale: f64, dt_steps: f64) -> ExperimentConfig {
    ExperimentConfig {
        tick_scale,
        dt_steps,
        ..ExperimentConfig::setting(setting_id, reps, seed)
    }
}

/// One simulated day of a reference setting: both observation series, the
/// true integrated covariation and tick-file CSV text for each asset.
pub fn simulate_json(setting_id: u8, seed: u64, tick_scale: f64, dt_steps: f64) -> Result<String, String> {
    let c = config(setting_id, 1, seed, tick_scale, dt_steps);
    c.validate().map_err(|e| e.to_string())?;
    let (spec, boundaries) = setting(setting_id).map_err(|e| e.to_string())?;
    let dt = c.grid_step().map_err(|e| e.to_string())?;
    let day = simulate_day(&spec, &boundaries, tick_scale, 1.0, dt, replication_seed(seed, 0))
        .map_err(|e| e.to_string())?;
    let [o1, o2] = &day.observations;
    let csv = [o1, o2].map(|o| {
        let mut buf = Vec::new();
        o.write_csv(&mut buf).map(|_| String::from_utf8(buf).unwrap_or_default())
    });
    let [c1, c2] = csv;
    let out = SimulatedDay {
        truth: day.truth,
        dt,
        assets: [o1, o2].map(|o| Series {
            times: &o.times,
            observed: &o.observed,
        }),
        csv: [c1.map_err(|e| e.to_string())?, c2.map_err(|e| e.to_string())?],
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Estimation report for two tick files given as CSV text. `h = 0` selects
/// the default block size; a non-finite `truth` omits the statistic.
pub fn estimate_json(first_csv: &str, second_csv: &str, h: usize, truth: f64) -> Result<String, String> {
    let o1 = read_tick_file(first_csv.as_bytes(), None).map_err(|e| format!("first asset: {e}"))?;
    let o2 = read_tick_file(second_csv.as_bytes(), None).map_err(|e| format!("second asset: {e}"))?;
    let opts = EstimateOptions {
        h: (h > 0).then_some(h),
        horizon: 1.0,
        truth: truth.is_finite().then_some(truth),
    };
    let report = estimate(&o1, &o2, &opts).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct HistogramOut {
    summary: endocov::harness::Summary,
    histogram: Vec<endocov::stats::HistogramBin>,
    statistics: Vec<f64>,
}

/// Run `reps` replications of a setting one after another and return the
/// summary plus a histogram of the feasible statistic on [−4, 4].
pub fn histogram_json(setting_id: u8, reps: usize, seed: u64, dt_steps: f64, bins: usize) -> Result<String, String> {
    if reps == 0 || reps > MAX_DEMO_REPS {
        return Err(format!("replications must be between 1 and {MAX_DEMO_REPS}"));
    }
    let c = config(setting_id, reps, seed, 1.0, dt_steps);
    c.validate().map_err(|e| e.to_string())?;
    let (spec, boundaries) = setting(setting_id).map_err(|e| e.to_string())?;
    let dt = c.grid_step().map_err(|e| e.to_string())?;
    let mut records = Vec::with_capacity(reps);
    let mut failed = 0;
    for rep in 0..reps {
        match run_replication(&c, &spec, &boundaries, dt, rep) {
            Ok((r, _)) => records.push(r),
            Err(_) => failed += 1,
        }
    }
    let summary = summarize(&records, failed).map_err(|e| e.to_string())?;
    let statistics: Vec<f64> = records.iter().map(|r| r.statistic).collect();
    let out = HistogramOut {
        summary,
        histogram: histogram(&statistics, -4.0, 4.0, bins).map_err(|e| e.to_string())?,
        statistics,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(setting_id: u8, seed: u64, tick_scale: f64, dt_steps: f64) -> Result<String, JsValue> {
    js(simulate_json(setting_id, seed, tick_scale, dt_steps))
}

#[wasm_bindgen(js_name = estimateTicks)]
pub fn estimate_ticks(first_csv: &str, second_csv: &str, h: usize, truth: f64) -> Result<String, JsValue> {
    js(estimate_json(first_csv, second_csv, h, truth))
}

#[wasm_bindgen(js_name = statisticHistogram)]
pub fn statistic_histogram(setting_id: u8, reps: usize, seed: u64, dt_steps: f64, bins: usize) -> Result<String, JsValue> {
    js(histogram_json(setting_id, reps, seed, dt_steps, bins))
}
