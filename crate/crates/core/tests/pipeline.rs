use std::fs;
use std::path::{Path, PathBuf};

use tatonnement::engine::Scenario;
use tatonnement::harness::{
    cmd_batch, cmd_certify, cmd_plan, cmd_run, load_certify_inputs, ExperimentConfig, SchedulerKind, EXIT_OK,
};
use tatonnement::market::{load_spec, MarketSpec};
use tatonnement::planner::UpdateRule;
use tatonnement::trace::{read_trace, TraceFormat, TraceSink, TraceWriter};

fn market(name: &str) -> MarketSpec {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../markets").join(name);
    load_spec(&fs::read_to_string(path).unwrap()).unwrap()
}

fn artifacts(dir: &Path, format: TraceFormat) -> (PathBuf, PathBuf, PathBuf) {
    let trace = match format {
        TraceFormat::Jsonl => "trace.jsonl",
        TraceFormat::Csv => "trace.csv",
    };
    (dir.join("market.json"), dir.join("plan.json"), dir.join(trace))
}

#[test]
fn shipped_markets_plan_cleanly() {
    for name in ["cobb_douglas.json", "complements.json", "mixture.json"] {
        let report = cmd_plan(&market(name), UpdateRule::Linear, 2.0, 4.0).unwrap();
        assert!(report.conditions.iter().all(|c| c.pass), "{name}: {:?}", report.conditions);
    }
}

#[test]
fn run_then_certify_from_disk() {
    for (name, scenario, format) in [
        ("complements.json", Scenario::Ongoing, TraceFormat::Jsonl),
        ("mixture.json", Scenario::Ongoing, TraceFormat::Csv),
        ("cobb_douglas.json", Scenario::OneTime, TraceFormat::Jsonl),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig {
            scenario,
            scheduler: SchedulerKind::Random,
            seed: 7,
            days: Some(60.0),
            ..Default::default()
        };
        let result = cmd_run(&market(name), &config, Some(dir.path()), format).unwrap();
        assert_eq!(result.exit_code(), EXIT_OK, "{name}: {:?}", result.certificate.violations);
        let (m, p, t) = artifacts(dir.path(), format);
        let (spec, plan, records) = load_certify_inputs(&m, &p, &t).unwrap();
        let report = cmd_certify(&spec, &plan, &records).unwrap();
        assert!(report.is_clean(), "{name}: {:?} {:?}", report.mismatches, report.violations);
        assert_eq!(report.records, result.outcome.records);
    }
}

#[test]
fn tampered_trace_is_reported_at_the_edited_record() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { days: Some(20.0), ..Default::default() };
    cmd_run(&market("complements.json"), &config, Some(dir.path()), TraceFormat::Jsonl).unwrap();
    let (m, p, t) = artifacts(dir.path(), TraceFormat::Jsonl);
    let mut records = read_trace(fs::File::open(&t).map(std::io::BufReader::new).unwrap()).unwrap();
    let k = records.len() / 2;
    records[k].prices[0] *= 1.001;
    let mut w = TraceWriter::new(Vec::new(), TraceFormat::Jsonl);
    for r in &records {
        w.record(r).unwrap();
    }
    fs::write(&t, w.into_inner()).unwrap();
    let (spec, plan, records) = load_certify_inputs(&m, &p, &t).unwrap();
    let report = cmd_certify(&spec, &plan, &records).unwrap();
    assert!(!report.is_clean());
    assert_eq!(report.mismatches.first[0].record, k);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let config =
        ExperimentConfig { scheduler: SchedulerKind::Random, seed: 11, days: Some(40.0), ..Default::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_run(&market("mixture.json"), &config, Some(a.path()), TraceFormat::Csv).unwrap();
    cmd_run(&market("mixture.json"), &config, Some(b.path()), TraceFormat::Csv).unwrap();
    for name in ["trace.csv", "summary.json", "certificate.json", "plan.json", "market.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn batch_aggregates_every_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig { scheduler: SchedulerKind::Staggered, days: Some(30.0), ..Default::default() };
    let report =
        cmd_batch(&market("cobb_douglas.json"), &config, &[1, 2, 3], Some(dir.path()), TraceFormat::Jsonl).unwrap();
    assert_eq!(report.runs.len(), 3);
    assert_eq!(report.failures + report.unclean, 0);
    assert!(dir.path().join("batch.json").is_file());
    assert!(dir.path().join("seed-2/trace.jsonl").is_file());
}
