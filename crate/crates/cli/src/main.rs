use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tatonnement::engine::Scenario;
use tatonnement::harness::{self, ExperimentConfig, SchedulerKind, EXIT_OK, EXIT_RUNTIME, EXIT_VIOLATION};
use tatonnement::market::{load_spec_with_report, MarketSpec};
use tatonnement::planner::{UpdateRule, DEFAULT_SAFETY_MULTIPLIER};
use tatonnement::trace::TraceFormat;
use tatonnement::Error;

/// Simulate tatonnement price dynamics in a Fisher market with warehouses
/// and certify the traces.
#[derive(Parser, Debug)]
#[command(name = "tatonnement", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Derive market constants and admissible parameters, and size warehouses.
    Plan(PlanArgs),
    /// Simulate a market, certify the trace and write the run's artifacts.
    Run(RunArgs),
    /// Re-check a stored trace against its market and plan.
    Certify(CertifyArgs),
}

#[derive(Args, Debug)]
struct PlanArgs {
    #[arg(long)]
    market: PathBuf,
    #[arg(long, value_enum, default_value_t = RuleArg::Linear)]
    rule: RuleArg,
    /// Initial price distortion the warehouses must absorb.
    #[arg(long, default_value_t = 2.0)]
    f_init: f64,
    #[arg(long, default_value_t = DEFAULT_SAFETY_MULTIPLIER)]
    multiplier: f64,
    /// Plan at the smallest warehouse ratio that passes sizing instead of the
    /// market's own.
    #[arg(long)]
    size: bool,
    /// Write the plan here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    market: PathBuf,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Ongoing)]
    scenario: ScenarioArg,
    #[arg(long, value_enum, default_value_t = RuleArg::Linear)]
    rule: RuleArg,
    #[arg(long, value_enum, default_value_t = SchedulerArg::Sync)]
    scheduler: SchedulerArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Horizon in days; by default long enough to pass the safety deadline
    /// (ongoing) or ten Phase-1 estimates (one-time).
    #[arg(long)]
    days: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    f_init: f64,
    /// Explicit initial price multipliers, one per good; overrides --f-init.
    #[arg(long, value_delimiter = ',')]
    distortion: Option<Vec<f64>>,
    /// Targets η for which the time to reach f ≤ 1 + η is reported.
    #[arg(long, value_delimiter = ',', default_value = "0.25,0.1")]
    eta: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    format: FormatArg,
    /// Mean gap between updates of the random scheduler, in days.
    #[arg(long, default_value_t = 0.5)]
    mean_gap: f64,
    /// Replace the market's warehouses with planner-sized ones.
    #[arg(long)]
    auto_size: bool,
    #[arg(long, default_value_t = DEFAULT_SAFETY_MULTIPLIER)]
    multiplier: f64,
    /// Run this many consecutive seeds starting at --seed and report
    /// quantiles.
    #[arg(long)]
    batch: Option<u64>,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    market: PathBuf,
    /// The plan.json written by `run`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RuleArg {
    Linear,
    Exponential,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScenarioArg {
    Onetime,
    Ongoing,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SchedulerArg {
    Sync,
    Staggered,
    Random,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Jsonl,
    Csv,
}

impl From<RuleArg> for UpdateRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Linear => UpdateRule::Linear,
            RuleArg::Exponential => UpdateRule::Exponential,
        }
    }
}

fn load_market(path: &Path) -> Result<MarketSpec, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let (spec, report) = load_spec_with_report(&text)?;
    for issue in report.warnings() {
        eprintln!("warning: {}: {}", issue.locus, issue.message);
    }
    Ok(spec)
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => {
            // A closed pipe (e.g. `| head`) is not an error for the run itself.
            if let Err(e) = writeln!(std::io::stdout().lock(), "{text}") {
                if e.kind() != ErrorKind::BrokenPipe {
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn plan(args: PlanArgs) -> Result<i32, Error> {
    let spec = load_market(&args.market)?;
    let report = if args.size {
        harness::cmd_plan_sized(&spec, args.rule.into(), args.f_init, args.multiplier)?
    } else {
        harness::cmd_plan(&spec, args.rule.into(), args.f_init, args.multiplier)?
    };
    emit(&report, args.out.as_deref())?;
    if !report.sizing.pass {
        eprintln!("warning: warehouses are smaller than the sizing bound for f_init = {}", args.f_init);
    }
    Ok(EXIT_OK)
}

fn run(args: RunArgs) -> Result<i32, Error> {
    let spec = load_market(&args.market)?;
    let config = ExperimentConfig {
        scenario: match args.scenario {
            ScenarioArg::Onetime => Scenario::OneTime,
            ScenarioArg::Ongoing => Scenario::Ongoing,
        },
        rule: args.rule.into(),
        scheduler: match args.scheduler {
            SchedulerArg::Sync => SchedulerKind::Sync,
            SchedulerArg::Staggered => SchedulerKind::Staggered,
            SchedulerArg::Random => SchedulerKind::Random,
        },
        seed: args.seed,
        days: args.days,
        f_init: args.f_init,
        distortion: args.distortion,
        etas: args.eta,
        mean_gap: args.mean_gap,
        auto_size: args.auto_size,
        sizing_multiplier: args.multiplier,
    };
    config.validate()?;
    let format = match args.format {
        FormatArg::Jsonl => TraceFormat::Jsonl,
        FormatArg::Csv => TraceFormat::Csv,
    };
    if let Some(count) = args.batch {
        let seeds: Vec<u64> = (args.seed..args.seed + count).collect();
        let report = harness::cmd_batch(&spec, &config, &seeds, args.out.as_deref(), format)?;
        emit(&report, None)?;
        return Ok(if report.failures > 0 {
            EXIT_RUNTIME
        } else if report.unclean > 0 {
            EXIT_VIOLATION
        } else {
            EXIT_OK
        });
    }
    let result = harness::cmd_run(&spec, &config, args.out.as_deref(), format)?;
    emit(&result.summary, None)?;
    for v in &result.certificate.violations.first {
        eprintln!("violation: {} at t = {}: {}", v.check, v.t, v.detail);
    }
    for m in &result.certificate.mismatches.first {
        eprintln!("mismatch: record {} field {}: stored {} recomputed {}", m.record, m.field, m.stored, m.recomputed);
    }
    Ok(result.exit_code())
}

fn certify(args: CertifyArgs) -> Result<i32, Error> {
    let (spec, plan, records) = harness::load_certify_inputs(&args.market, &args.params, &args.trace)?;
    let report = harness::cmd_certify(&spec, &plan, &records)?;
    emit(&report, args.out.as_deref())?;
    Ok(if report.failure.is_some() {
        EXIT_RUNTIME
    } else if report.is_clean() {
        EXIT_OK
    } else {
        EXIT_VIOLATION
    })
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is reserved for infeasibility here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_RUNTIME as u8 } else { EXIT_OK as u8 });
        }
    };
    let outcome = match cli.command {
        Command::Plan(a) => plan(a),
        Command::Run(a) => run(a),
        Command::Certify(a) => certify(a),
    };
    let code = outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        if let Error::Infeasible { violated } = &e {
            for v in violated {
                eprintln!("  violated: {} ({} vs {})", v.name, v.lhs, v.rhs);
            }
        }
        harness::exit_code_for(&e)
    });
    ExitCode::from(code as u8)
}
