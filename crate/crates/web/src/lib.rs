//! Browser bindings for the demo page in `www/`. Every export takes and
//! returns JSON text so the page needs no generated type glue.
//!
//! The `*_json` functions hold the logic and are plain Rust, so they can be
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use tatonnement::demand::aggregate_demand;
use tatonnement::engine::Scenario;
use tatonnement::equilibrium::{solve_equilibrium, DEFAULT_TOLERANCE};
use tatonnement::harness::{self, ExperimentConfig, RunSummary, SchedulerKind};
use tatonnement::market::{load_spec, MarketSpec};
use tatonnement::planner::UpdateRule;
use tatonnement::trace::{RecordKind, TraceRecord};

/// Longest simulation the page may request, in days.
pub const MAX_DAYS: f64 = 20_000.0;
/// Day records are thinned to at most this many chart points.
pub const MAX_POINTS: usize = 1_000;

const MARKETS: [(&str, &str); 3] = [
    ("cobb_douglas", include_str!("../../../markets/cobb_douglas.json")),
    ("complements", include_str!("../../../markets/complements.json")),
    ("mixture", include_str!("../../../markets/mixture.json")),
];

fn market(text: &str) -> Result<MarketSpec, String> {
    load_spec(text).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("demo types serialize")
}

pub fn sample_market_json(name: &str) -> Result<String, String> {
    MARKETS.iter().find(|m| m.0 == name).map(|m| m.1.to_string()).ok_or_else(|| format!("no sample market {name:?}"))
}

/// Plans at the smallest warehouse ratio that passes sizing for `f_init`.
pub fn plan_json(market_text: &str, f_init: f64) -> Result<String, String> {
    let spec = market(market_text)?;
    let report = harness::cmd_plan_sized(&spec, UpdateRule::Linear, f_init, 1.0).map_err(|e| e.to_string())?;
    Ok(to_json(&report))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateOptions {
    pub scenario: Scenario,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub days: f64,
    pub f_init: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        SimulateOptions {
            scenario: Scenario::Ongoing,
            scheduler: SchedulerKind::Random,
            seed: 1,
            days: 400.0,
            f_init: 2.0,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ChartPoint {
    pub t: f64,
    pub f: f64,
    pub phi: f64,
    pub misspending: f64,
    /// Warehouse stock as a fraction of capacity; empty in one-time runs.
    pub fill: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Simulation {
    pub points: Vec<ChartPoint>,
    pub summary: RunSummary,
}

/// Simulates with planner-sized warehouses and returns thinned day records
/// together with the run summary.
pub fn simulate_json(market_text: &str, options_text: &str) -> Result<String, String> {
    let spec = market(market_text)?;
    let opts: SimulateOptions = serde_json::from_str(options_text).map_err(|e| format!("options: {e}"))?;
    if !(opts.days > 0.0 && opts.days <= MAX_DAYS) {
        return Err(format!("days must lie in (0, {MAX_DAYS}]"));
    }
    let config = ExperimentConfig {
        scenario: opts.scenario,
        scheduler: opts.scheduler,
        seed: opts.seed,
        days: Some(opts.days),
        f_init: opts.f_init,
        auto_size: true,
        sizing_multiplier: 1.0,
        ..Default::default()
    };
    let prepared = harness::prepare(&spec, &config).map_err(|e| e.to_string())?;
    let chi = prepared.spec.capacities();
    let stride = (opts.days / MAX_POINTS as f64).ceil().max(1.0);
    let mut points = Vec::new();
    let mut keep = |rec: &TraceRecord| -> tatonnement::Result<()> {
        let on_stride = rec.kind == RecordKind::Day && ((rec.t / stride).fract() == 0.0 || rec.t >= opts.days);
        if rec.kind == RecordKind::Init || on_stride || matches!(rec.kind, RecordKind::End | RecordKind::Failure) {
            points.push(ChartPoint {
                t: rec.t,
                f: rec.f,
                phi: rec.phi,
                misspending: rec.misspending,
                fill: rec.v.iter().zip(&chi).map(|(v, c)| v / c).collect(),
            });
        }
        Ok(())
    };
    let result = harness::execute(prepared, &config, Some(&mut keep)).map_err(|e| e.to_string())?;
    Ok(to_json(&Simulation { points, summary: result.summary }))
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub price: f64,
    pub demand: f64,
}

#[derive(Debug, Serialize)]
pub struct DemandCurve {
    pub good: usize,
    pub equilibrium_price: f64,
    pub supply: f64,
    pub points: Vec<CurvePoint>,
}

/// Aggregate demand for one good as its price sweeps `[p*/spread, spread·p*]`
/// log-uniformly, other prices held at equilibrium.
pub fn demand_curve_json(market_text: &str, good: usize, spread: f64, points: usize) -> Result<String, String> {
    let spec = market(market_text)?;
    if good >= spec.n_goods() {
        return Err(format!("good {good} does not exist"));
    }
    if !(spread > 1.0 && spread.is_finite()) || !(2..=10_000).contains(&points) {
        return Err("spread must exceed 1 and points must lie in [2, 10000]".into());
    }
    let p_star = solve_equilibrium(&spec, DEFAULT_TOLERANCE).map_err(|e| e.to_string())?.p_star;
    let mut prices = p_star.clone();
    let curve = (0..points)
        .map(|k| {
            let s = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
            prices[good] = p_star[good] * spread.powf(s);
            let x = aggregate_demand(&spec, &prices).map_err(|e| e.to_string())?;
            Ok(CurvePoint { price: prices[good], demand: x.quantities[good] })
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(to_json(&DemandCurve {
        good,
        equilibrium_price: p_star[good],
        supply: spec.goods()[good].supply_w,
        points: curve,
    }))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = sampleMarket)]
pub fn sample_market(name: &str) -> Result<String, JsError> {
    js(sample_market_json(name))
}

#[wasm_bindgen]
pub fn plan(market_text: &str, f_init: f64) -> Result<String, JsError> {
    js(plan_json(market_text, f_init))
}

#[wasm_bindgen]
pub fn simulate(market_text: &str, options_text: &str) -> Result<String, JsError> {
    js(simulate_json(market_text, options_text))
}

#[wasm_bindgen(js_name = demandCurve)]
pub fn demand_curve(market_text: &str, good: usize, spread: f64, points: usize) -> Result<String, JsError> {
    js(demand_curve_json(market_text, good, spread, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn sample(name: &str) -> String {
        sample_market_json(name).unwrap()
    }

    #[test]
    fn every_sample_market_loads() {
        for (name, _) in MARKETS {
            assert!(market(&sample(name)).is_ok(), "{name}");
        }
        assert!(sample_market_json("nope").is_err());
    }

    #[test]
    fn plan_reports_parameters() {
        let v: Value = serde_json::from_str(&plan_json(&sample("mixture"), 2.0).unwrap()).unwrap();
        assert!(v["sizing"]["pass"].as_bool().unwrap());
    }

    #[test]
    fn simulation_is_thinned_and_clean() {
        let opts = r#"{"days": 2500, "seed": 4}"#;
        let v: Value = serde_json::from_str(&simulate_json(&sample("cobb_douglas"), opts).unwrap()).unwrap();
        let pts = v["points"].as_array().unwrap();
        assert!(pts.len() <= MAX_POINTS + 2, "{}", pts.len());
        assert_eq!(pts[0]["t"], 0.0);
        assert_eq!(pts.last().unwrap()["t"], 2500.0);
        assert_eq!(pts[0]["fill"].as_array().unwrap().len(), 3);
        assert_eq!(v["summary"]["clean"], true);
    }

    #[test]
    fn simulation_rejects_bad_options() {
        let m = sample("cobb_douglas");
        assert!(simulate_json(&m, r#"{"days": 1e9}"#).is_err());
        assert!(simulate_json(&m, r#"{"colour": 1}"#).unwrap_err().contains("colour"));
        assert!(simulate_json(&m, r#"{"f_init": 0.5}"#).is_err());
    }

    #[test]
    fn demand_curve_falls_through_supply() {
        let v: Value = serde_json::from_str(&demand_curve_json(&sample("complements"), 1, 4.0, 41).unwrap()).unwrap();
        let pts = v["points"].as_array().unwrap();
        let d: Vec<f64> = pts.iter().map(|p| p["demand"].as_f64().unwrap()).collect();
        assert!(d.windows(2).all(|w| w[1] < w[0]));
        let mid = &pts[20];
        let supply = v["supply"].as_f64().unwrap();
        assert!((mid["demand"].as_f64().unwrap() - supply).abs() < 1e-6 * supply);
        assert!(demand_curve_json(&sample("complements"), 9, 4.0, 41).is_err());
    }
}
