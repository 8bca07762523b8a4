use endocov_wasm::{estimate_json, histogram_json, simulate_json, MAX_DEMO_REPS};
use serde_json::Value;

#[test]
fn simulated_csv_feeds_the_estimator() {
    let day: Value = serde_json::from_str(&simulate_json(1, 3, 1.0, 10.0).unwrap()).unwrap();
    let truth = day["truth"].as_f64().unwrap();
    assert!((truth / 6.4e-5 - 1.0).abs() < 1e-6);
    let n = day["assets"][0]["times"].as_array().unwrap().len();
    assert!(n > 1000, "{n} observations");
    let (a, b) = (day["csv"][0].as_str().unwrap(), day["csv"][1].as_str().unwrap());
    let report: Value = serde_json::from_str(&estimate_json(a, b, 0, truth).unwrap()).unwrap();
    let hy = report["hy"].as_f64().unwrap();
    assert!((hy - truth).abs() < 1e-4);
    assert!(report["statistic"].is_number());
    let no_truth: Value = serde_json::from_str(&estimate_json(a, b, 50, f64::NAN).unwrap()).unwrap();
    assert!(no_truth.get("statistic").is_none());
    assert_eq!(no_truth["h"], 50);
}

#[test]
fn bad_input_is_reported() {
    let err = estimate_json("time,price\n0,1\n0.5,x\n", "time,price\n0,1\n0.5,2\n", 0, 0.0).unwrap_err();
    assert!(err.contains("first asset") && err.contains("row 2"), "{err}");
    assert!(simulate_json(9, 1, 1.0, 10.0).is_err());
    assert!(histogram_json(1, MAX_DEMO_REPS + 1, 1, 10.0, 16).is_err());
}

#[test]
fn histogram_counts_every_replication() {
    let out: Value = serde_json::from_str(&histogram_json(1, 4, 7, 10.0, 16).unwrap()).unwrap();
    let total: u64 = out["histogram"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 4);
    assert_eq!(out["summary"]["replications"], 4);
}
