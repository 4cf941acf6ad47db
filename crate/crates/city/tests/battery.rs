//! The full validation battery at its default scale must run green with
//! the committed default seed, and its reports must serialize cleanly.

use poissonian_city::validation::{run_battery, BatteryConfig};

#[test]
fn default_battery_is_green() {
    let reports = run_battery(&BatteryConfig::default());
    for r in &reports {
        println!(
            "{}: statistic {:.6} vs threshold {:.6} -> {}",
            r.name,
            r.statistic,
            r.threshold,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    assert!(reports.iter().all(|r| r.passed));

    // One report per battery entry: 6 KS + martingale + 2 decay +
    // 12 moment checks + mean flow.
    assert_eq!(reports.len(), 22);

    let json = serde_json::to_string(&reports).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.as_array().unwrap().len(), reports.len());
}
