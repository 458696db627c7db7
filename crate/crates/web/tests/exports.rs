use serde_json::Value;
use tatonnement_web::{demand_curve_json, plan_json, sample_market_json, simulate_json};

#[test]
fn page_workflow() {
    let market = sample_market_json("mixture").unwrap();
    let plan: Value = serde_json::from_str(&plan_json(&market, 1.5).unwrap()).unwrap();
    assert_eq!(plan["constants"]["class"], "mixture");

    let sim: Value = serde_json::from_str(
        &simulate_json(&market, r#"{"days": 60, "scheduler": "staggered", "f_init": 1.5}"#).unwrap(),
    )
    .unwrap();
    assert_eq!(sim["points"].as_array().unwrap().len(), 61);
    assert_eq!(sim["summary"]["violations"], 0);

    let curve: Value = serde_json::from_str(&demand_curve_json(&market, 0, 10.0, 5).unwrap()).unwrap();
    assert_eq!(curve["points"].as_array().unwrap().len(), 5);
}

#[test]
fn one_time_runs_have_no_fill() {
    let market = sample_market_json("cobb_douglas").unwrap();
    let sim: Value = serde_json::from_str(
        &simulate_json(&market, r#"{"scenario": "onetime", "scheduler": "sync", "days": 10}"#).unwrap(),
    )
    .unwrap();
    assert!(sim["points"][3]["fill"].as_array().unwrap().is_empty());
}

#[test]
fn malformed_market_is_reported() {
    let err = plan_json(r#"{"goods": [], "buyers": 3}"#, 2.0).unwrap_err();
    assert!(err.contains("buyers"), "{err}");
}
