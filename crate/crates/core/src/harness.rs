//! Experiment plumbing shared by the command-line tool and the demo.
//!
//! A run is certified while it is simulated. Given an output directory, each
//! artifact is written there atomically.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{CertificationReport, Certifier, CertifyOptions};
use crate::elasticity::{closed_form_constants, MarketConstants};
use crate::engine::{distorted_prices, RunOutcome, RunStatus, Scenario, Schedule, Simulation};
use crate::equilibrium::{solve_equilibrium, EquilibriumResult, DEFAULT_TOLERANCE};
use crate::error::{Error, Result};
use crate::market::{load_spec_with_report, serialize, MarketSpec};
use crate::planner::{
    check_all_conditions, plan_market, size_and_plan, warehouse_sizing, PlannerReport, UpdateRule,
    DEFAULT_SAFETY_MULTIPLIER,
};
use crate::trace::{read_trace, RecordKind, TraceFormat, TraceRecord, TraceSink, TraceWriter};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VIOLATION: i32 = 3;

/// Days simulated past the warehouse-safety deadline when no horizon is given.
const SAFETY_MARGIN_DAYS: f64 = 200.0;

/// Exit status for an error: 2 for infeasible or inadmissible plans, 1 for
/// everything else.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. } | Error::Precondition(_) => EXIT_INFEASIBLE,
        _ => EXIT_RUNTIME,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    #[default]
    Sync,
    Staggered,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub rule: UpdateRule,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    /// Horizon in days; chosen from the plan when absent.
    pub days: Option<f64>,
    /// Initial prices are `f_init`-bounded; 1 starts at equilibrium.
    pub f_init: f64,
    /// Explicit initial price multipliers `p°_i = g_i·p_i*`, overriding
    /// `f_init`.
    pub distortion: Option<Vec<f64>>,
    pub etas: Vec<f64>,
    pub mean_gap: f64,
    /// Replace the market's warehouses with planner-sized ones.
    pub auto_size: bool,
    pub sizing_multiplier: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scenario: Scenario::Ongoing,
            rule: UpdateRule::Linear,
            scheduler: SchedulerKind::Sync,
            seed: 0,
            days: None,
            f_init: 2.0,
            distortion: None,
            etas: vec![0.25, 0.1],
            mean_gap: 0.5,
            auto_size: false,
            sizing_multiplier: DEFAULT_SAFETY_MULTIPLIER,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_init >= 1.0 && self.f_init.is_finite()) {
            return Err(Error::Parse(format!("f_init = {} must be at least 1", self.f_init)));
        }
        if let Some(d) = self.days.filter(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::Parse(format!("horizon {d} must be positive")));
        }
        if let Some(e) = self.etas.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::Parse(format!("eta {e} must lie in (0, 1]")));
        }
        if let Some(g) = self.distortion.iter().flatten().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(Error::Parse(format!("price multiplier {g} must be positive")));
        }
        Ok(())
    }

    pub fn schedule(&self, n: usize) -> Schedule {
        match self.scheduler {
            SchedulerKind::Sync => Schedule::Synchronous,
            SchedulerKind::Staggered => Schedule::evenly_staggered(n),
            SchedulerKind::Random => Schedule::RandomWithDeadline { seed: self.seed, mean_gap: self.mean_gap },
        }
    }
}

/// Plans parameters for `spec` at its own warehouse ratio (the smallest one
/// when ratios differ) and sizes warehouses for `f_init`.
pub fn cmd_plan(spec: &MarketSpec, rule: UpdateRule, f_init: f64, multiplier: f64) -> Result<PlannerReport> {
    let base = closed_form_constants(spec, 0.0)?;
    let r = spec.common_ratio().unwrap_or_else(|| spec.min_ratio());
    let (constants, params) = plan_market(&base, r, rule)?;
    let sizing = warehouse_sizing(&constants, f_init, &params, multiplier);
    let conditions = check_all_conditions(&constants, &params);
    Ok(PlannerReport { constants, params, conditions, sizing })
}

/// Plans with the smallest warehouse ratio meeting the sizing bounds.
pub fn cmd_plan_sized(spec: &MarketSpec, rule: UpdateRule, f_init: f64, multiplier: f64) -> Result<PlannerReport> {
    let base = closed_form_constants(spec, 0.0)?;
    let (constants, params, sizing) = size_and_plan(&base, f_init, rule, multiplier)?;
    let conditions = check_all_conditions(&constants, &params);
    Ok(PlannerReport { constants, params, conditions, sizing })
}

/// A prepared experiment: the market actually simulated, its plan, its
/// equilibrium and the starting prices.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub spec: MarketSpec,
    pub plan: PlannerReport,
    pub equilibrium: EquilibriumResult,
    pub initial_prices: Vec<f64>,
    pub horizon: f64,
}

pub fn prepare(spec: &MarketSpec, config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let plan = if config.auto_size {
        cmd_plan_sized(spec, config.rule, config.f_init, config.sizing_multiplier)?
    } else {
        cmd_plan(spec, config.rule, config.f_init, config.sizing_multiplier)?
    };
    let spec = if config.auto_size { spec.with_ratio(plan.params.r) } else { spec.clone() };
    let equilibrium = solve_equilibrium(&spec, DEFAULT_TOLERANCE)?;
    let p_star = &equilibrium.p_star;
    let initial_prices = match &config.distortion {
        Some(g) if g.len() != p_star.len() => {
            return Err(Error::Dimension(format!("{} price multipliers for {} goods", g.len(), p_star.len())))
        }
        Some(g) => p_star.iter().zip(g).map(|(p, g)| p * g).collect(),
        None if config.f_init == 1.0 => p_star.clone(),
        None => distorted_prices(p_star, config.f_init, config.seed),
    };
    let horizon = config.days.unwrap_or_else(|| default_horizon(&plan, config.scenario));
    Ok(Prepared { spec, plan, equilibrium, initial_prices, horizon })
}

/// The ongoing market runs past the warehouse-safety deadline; the one-time
/// market runs for ten times its Phase-1 estimate.
pub fn default_horizon(plan: &PlannerReport, scenario: Scenario) -> f64 {
    match scenario {
        Scenario::Ongoing => (plan.sizing.safe_after_days + SAFETY_MARGIN_DAYS).ceil(),
        Scenario::OneTime => (10.0 * plan.sizing.phase1_days).ceil().max(1.0),
    }
}

pub fn certify_options(plan: &PlannerReport, config: &ExperimentConfig) -> CertifyOptions {
    CertifyOptions {
        etas: config.etas.clone(),
        daily_contraction: config.scenario == Scenario::OneTime && config.scheduler == SchedulerKind::Sync,
        phase_one_days: Some(plan.sizing.phase1_days),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaSummary {
    pub eta: f64,
    pub days: Option<f64>,
    /// Days divided by `(1/λ)ln f + (1/(λβ))ln(1/δ) + (1/κ)ln(M/(η·min_i w_i p_i*))`.
    pub empirical_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub seed: u64,
    pub f_init: f64,
    pub horizon: f64,
    pub status: RunStatus,
    pub events: usize,
    pub records: usize,
    pub f_two: f64,
    pub days_to_phase_two: Option<f64>,
    /// `1 + 2δ/β`, the end of Phase 1 in the one-time analysis.
    pub phase_one_target: f64,
    pub days_to_phase_one_target: Option<f64>,
    /// `(1/λ)ln f + (1/(λβ))ln(1/δ)`.
    pub phase_one_bound: f64,
    pub etas: Vec<EtaSummary>,
    pub decay_rate_guaranteed: Option<f64>,
    pub decay_rate_fitted: Option<f64>,
    pub decay_worst_ratio: Option<f64>,
    pub min_fill: Option<f64>,
    pub max_fill: Option<f64>,
    pub outer_buffer_records: Option<usize>,
    pub safe_after: Option<f64>,
    pub last_unsafe: Option<f64>,
    pub violations: usize,
    pub mismatches: usize,
    pub max_alpha_prime_measured: Option<f64>,
    pub max_conservation_error: f64,
    pub clean: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub prepared: Prepared,
    pub outcome: RunOutcome,
    pub certificate: CertificationReport,
    pub summary: RunSummary,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        if self.outcome.status != RunStatus::Completed {
            EXIT_RUNTIME
        } else if !self.certificate.is_clean() {
            EXIT_VIOLATION
        } else {
            EXIT_OK
        }
    }
}

/// Forwards each record to the certifier and an optional second sink.
struct Tee<'c, 'a, S: ?Sized> {
    certifier: &'c mut Certifier<'a>,
    inner: Option<&'c mut S>,
    target: f64,
    first_below: Option<f64>,
}

impl<S: TraceSink + ?Sized> TraceSink for Tee<'_, '_, S> {
    fn record(&mut self, rec: &TraceRecord) -> Result<()> {
        self.certifier.observe(rec)?;
        if self.first_below.is_none() && rec.f <= self.target {
            self.first_below = Some(rec.t);
        }
        if let Some(s) = self.inner.as_deref_mut() {
            s.record(rec)?;
        }
        Ok(())
    }
}

/// Runs a prepared experiment, certifying it as it goes and passing every
/// record on to `sink`.
pub fn execute<S: TraceSink + ?Sized>(
    prepared: Prepared,
    config: &ExperimentConfig,
    sink: Option<&mut S>,
) -> Result<RunResult> {
    let spec = &prepared.spec;
    let plan = &prepared.plan;
    let p_star = prepared.equilibrium.p_star.clone();
    let mut sim = Simulation::new(
        spec,
        plan.params,
        config.scenario,
        config.schedule(spec.n_goods()),
        prepared.initial_prices.clone(),
        None,
        p_star.clone(),
    )?;
    let mut certifier = Certifier::new(
        spec,
        plan.params,
        plan.constants.clone(),
        p_star,
        config.scenario,
        certify_options(plan, config),
    );
    let target = 1.0 + 2.0 * plan.params.delta / plan.constants.beta;
    let (outcome, first_below) = {
        let mut tee = Tee { certifier: &mut certifier, inner: sink, target, first_below: None };
        let outcome = sim.run(prepared.horizon, &mut tee)?;
        (outcome, tee.first_below)
    };
    let certificate = certifier.finish();
    drop(sim);
    let summary = summarize(&prepared, config, &outcome, &certificate, first_below);
    Ok(RunResult { prepared, outcome, certificate, summary })
}

fn summarize(
    p: &Prepared,
    config: &ExperimentConfig,
    outcome: &RunOutcome,
    c: &CertificationReport,
    days_to_phase_one_target: Option<f64>,
) -> RunSummary {
    let MarketConstants { beta, .. } = p.plan.constants;
    let params = &p.plan.params;
    let f0 = crate::equilibrium::f_bound(&p.initial_prices, &p.equilibrium.p_star);
    let phase_one_bound = f0.ln() / params.lambda + (1.0 / params.delta).ln() / (params.lambda * beta);
    let money = p.spec.total_money();
    let min_value =
        p.spec.goods().iter().zip(&p.equilibrium.p_star).map(|(g, q)| g.supply_w * q).fold(f64::INFINITY, f64::min);
    let etas = c
        .phase
        .eta_times
        .iter()
        .map(|&(eta, days)| {
            let bound = phase_one_bound + (money / (eta * min_value)).ln() / params.kappa;
            EtaSummary { eta, days, empirical_constant: days.map(|d| d / bound) }
        })
        .collect();
    let phase_one_target = 1.0 + 2.0 * params.delta / beta;
    let safety = c.safety.as_ref();
    RunSummary {
        scenario: config.scenario,
        seed: config.seed,
        f_init: f0,
        horizon: p.horizon,
        status: outcome.status.clone(),
        events: outcome.events,
        records: outcome.records,
        f_two: c.phase.f_two,
        days_to_phase_two: c.phase.phase_two_entry,
        phase_one_target,
        days_to_phase_one_target,
        phase_one_bound,
        etas,
        decay_rate_guaranteed: c.decay.as_ref().map(|d| d.rate),
        decay_rate_fitted: c.decay.as_ref().and_then(|d| d.fitted_rate),
        decay_worst_ratio: c.decay.as_ref().map(|d| d.worst_ratio),
        min_fill: safety.map(|s| s.min_fill),
        max_fill: safety.map(|s| s.max_fill),
        outer_buffer_records: safety.map(|s| s.outer_buffer_records),
        safe_after: safety.and_then(|s| s.safe_after),
        last_unsafe: safety.and_then(|s| s.last_unsafe),
        violations: c.violations.count,
        mismatches: c.mismatches.count,
        max_alpha_prime_measured: c.max_alpha_prime_measured,
        max_conservation_error: outcome.max_conservation_error,
        clean: c.is_clean() && outcome.status == RunStatus::Completed,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report types serialize");
    s.push(b'\n');
    s
}

pub fn trace_file_name(format: TraceFormat) -> &'static str {
    match format {
        TraceFormat::Jsonl => "trace.jsonl",
        TraceFormat::Csv => "trace.csv",
    }
}

/// Runs one experiment and, given a directory, writes `market.json`,
/// `plan.json`, the trace, `certificate.json` and `summary.json` there.
pub fn cmd_run(
    spec: &MarketSpec,
    config: &ExperimentConfig,
    out: Option<&Path>,
    format: TraceFormat,
) -> Result<RunResult> {
    let prepared = prepare(spec, config)?;
    let Some(dir) = out else {
        return execute::<TraceWriter<std::io::Sink>>(prepared, config, None);
    };
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join("market.json"), serialize(&prepared.spec).as_bytes())?;
    write_atomic(&dir.join("plan.json"), &to_json(&prepared.plan))?;
    let trace_path = dir.join(trace_file_name(format));
    let tmp = trace_path.with_extension("tmp");
    let mut writer = TraceWriter::new(BufWriter::new(fs::File::create(&tmp)?), format);
    let result = execute(prepared, config, Some(&mut writer))?;
    writer.into_inner().into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    fs::rename(&tmp, &trace_path)?;
    write_atomic(&dir.join("certificate.json"), &to_json(&result.certificate))?;
    write_atomic(&dir.join("summary.json"), &to_json(&result.summary))?;
    Ok(result)
}

/// Re-certifies a stored trace against a market and a plan.
pub fn cmd_certify(spec: &MarketSpec, plan: &PlannerReport, records: &[TraceRecord]) -> Result<CertificationReport> {
    let first = records.first().ok_or_else(|| Error::Schema("empty trace".into()))?;
    let scenario = if first.v.is_empty() { Scenario::OneTime } else { Scenario::Ongoing };
    let synchronous = records.iter().filter(|r| r.kind == RecordKind::Update).all(|r| r.t.fract() == 0.0);
    let equilibrium = solve_equilibrium(spec, DEFAULT_TOLERANCE)?;
    let options = CertifyOptions {
        daily_contraction: scenario == Scenario::OneTime && synchronous,
        phase_one_days: Some(plan.sizing.phase1_days),
        ..CertifyOptions::default()
    };
    crate::certify::certify_trace(
        spec,
        plan.params,
        plan.constants.clone(),
        equilibrium.p_star,
        scenario,
        options,
        records,
    )
}

/// Loads the files `cmd_certify` needs from disk.
pub fn load_certify_inputs(
    market: &Path,
    plan: &Path,
    trace: &Path,
) -> Result<(MarketSpec, PlannerReport, Vec<TraceRecord>)> {
    let (spec, _) = load_spec_with_report(&fs::read_to_string(market)?)?;
    let plan_text = fs::read_to_string(plan)?;
    let plan: PlannerReport =
        serde_json::from_str(&plan_text).map_err(|e| Error::Parse(format!("{}: {e}", plan.display())))?;
    let records = read_trace(BufReader::new(fs::File::open(trace)?))?;
    Ok((spec, plan, records))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Quantiles {
    pub count: usize,
    pub min: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub max: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((p * (v.len() - 1) as f64).round()) as usize];
        Some(Quantiles { count: v.len(), min: v[0], p25: q(0.25), median: q(0.5), p75: q(0.75), max: v[v.len() - 1] })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub runs: Vec<RunSummary>,
    pub failures: usize,
    pub unclean: usize,
    pub days_to_phase_two: Option<Quantiles>,
    pub days_to_phase_one_target: Option<Quantiles>,
    pub decay_rate_fitted: Option<Quantiles>,
    pub min_fill: Option<Quantiles>,
    pub max_fill: Option<Quantiles>,
}

/// Runs `config` once per seed in parallel and aggregates the summaries.
/// With a directory, each run writes its artifacts to `seed-<n>/`.
pub fn cmd_batch(
    spec: &MarketSpec,
    config: &ExperimentConfig,
    seeds: &[u64],
    out: Option<&Path>,
    format: TraceFormat,
) -> Result<BatchReport> {
    let results: Vec<Result<RunSummary>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ExperimentConfig { seed, ..config.clone() };
            let dir: Option<PathBuf> = out.map(|d| d.join(format!("seed-{seed}")));
            cmd_run(spec, &cfg, dir.as_deref(), format).map(|r| r.summary)
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let collect =
        |f: &dyn Fn(&RunSummary) -> Option<f64>| Quantiles::of(&runs.iter().filter_map(f).collect::<Vec<_>>());
    let report = BatchReport {
        failures: runs.iter().filter(|r| r.status != RunStatus::Completed).count(),
        unclean: runs.iter().filter(|r| !r.clean).count(),
        days_to_phase_two: collect(&|r| r.days_to_phase_two),
        days_to_phase_one_target: collect(&|r| r.days_to_phase_one_target),
        decay_rate_fitted: collect(&|r| r.decay_rate_fitted),
        min_fill: collect(&|r| r.min_fill),
        max_fill: collect(&|r| r.max_fill),
        runs,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_atomic(&dir.join("batch.json"), &to_json(&report))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{Buyer, Good, UtilityTree};

    fn cobb_douglas(r: f64) -> MarketSpec {
        MarketSpec::new(
            vec![Good::new(0, 1.0, r), Good::new(1, 2.0, 2.0 * r)],
            vec![Buyer::new(0, 3.0, UtilityTree::ces(0.0, &[1.0, 2.0]))],
        )
    }

    #[test]
    fn quantiles_use_nearest_rank() {
        let q = Quantiles::of(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!((q.min, q.p25, q.median, q.p75, q.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert!(Quantiles::of(&[]).is_none());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&Error::Infeasible { violated: vec![] }), EXIT_INFEASIBLE);
        assert_eq!(exit_code_for(&Error::Precondition("x".into())), EXIT_INFEASIBLE);
        assert_eq!(exit_code_for(&Error::Schema("x".into())), EXIT_RUNTIME);
    }

    #[test]
    fn small_warehouses_cannot_be_planned() {
        let err = cmd_plan(&cobb_douglas(100.0), UpdateRule::Linear, 2.0, 4.0).unwrap_err();
        assert_eq!(exit_code_for(&err), EXIT_INFEASIBLE);
    }

    #[test]
    fn config_validation() {
        let bad = |c: ExperimentConfig| c.validate().is_err();
        assert!(bad(ExperimentConfig { f_init: 0.5, ..Default::default() }));
        assert!(bad(ExperimentConfig { days: Some(0.0), ..Default::default() }));
        assert!(bad(ExperimentConfig { etas: vec![1.5], ..Default::default() }));
        assert!(bad(ExperimentConfig { distortion: Some(vec![1.0, -1.0]), ..Default::default() }));
        assert!(ExperimentConfig::default().validate().is_ok());
    }

    #[test]
    fn explicit_distortion_sets_initial_prices() {
        let cfg = ExperimentConfig { distortion: Some(vec![2.0, 0.5]), days: Some(1.0), ..Default::default() };
        let p = prepare(&cobb_douglas(4096.0), &cfg).unwrap();
        let q = &p.equilibrium.p_star;
        assert_eq!(p.initial_prices, vec![2.0 * q[0], 0.5 * q[1]]);
        let wrong = ExperimentConfig { distortion: Some(vec![2.0]), ..cfg };
        assert!(matches!(prepare(&cobb_douglas(4096.0), &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn short_run_is_clean_and_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { days: Some(30.0), seed: 3, ..Default::default() };
        let res = cmd_run(&cobb_douglas(4096.0), &cfg, Some(dir.path()), TraceFormat::Csv).unwrap();
        assert_eq!(res.exit_code(), EXIT_OK, "{:?}", res.certificate.violations);
        for name in ["market.json", "plan.json", "trace.csv", "certificate.json", "summary.json"] {
            assert!(dir.path().join(name).is_file(), "{name}");
        }
        assert!(!dir.path().join("trace.tmp").exists());
        let (spec, plan, records) = load_certify_inputs(
            &dir.path().join("market.json"),
            &dir.path().join("plan.json"),
            &dir.path().join("trace.csv"),
        )
        .unwrap();
        assert_eq!(plan, res.prepared.plan);
        assert_eq!(records.len(), res.outcome.records);
        assert!(cmd_certify(&spec, &plan, &records).unwrap().is_clean());
    }
}
