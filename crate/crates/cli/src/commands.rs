use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use qfluct::driving::{work_report_unchecked, WorkReport, INEQUALITY_TOL};
use qfluct::meter::{convergence_scan, log_log_slope};
use qfluct::openthermo::open_work_report_unchecked;
use qfluct::optimize::minimize_bound;
use qfluct::suites::{verify_all, VerifyConfig};

use crate::error::{AtPath, CliError};
use crate::report::{
    canonical_json, emit, sha256_hex, Format, MeterTable, Payload, RunReport, Sweep, SweepRow,
    Verification,
};
use crate::scenario::{parse, ScenarioFile};

#[derive(Debug, Parser)]
#[command(
    name = "qfluct",
    version,
    about = "Operational work-fluctuation bounds for small quantum systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the randomized inequality and identity suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Number of randomized scenarios per suite.
        #[arg(long, default_value_t = 1000)]
        seeds: usize,
        /// Fix the Hilbert-space dimension (default: random in 2..=4).
        #[arg(long)]
        dim: Option<usize>,
        /// Number of probes for the trace-inequality suites.
        #[arg(long, default_value_t = 10_000)]
        probes: usize,
    },
    /// Work report and bound chain for a closed scenario.
    Bound(ScenarioArgs),
    /// Work report for a scenario with damping events.
    OpenRun(ScenarioArgs),
    /// Meter convergence and variance table.
    Meter(ScenarioArgs),
    /// Minimize the operational bound over unitaries and POVMs.
    Optimize(ScenarioArgs),
    /// One work report per value of the scenario's sweep grid.
    Sweep(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    pub scenario: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Base seed; overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Relative slack for inequality checks.
    #[arg(long, default_value_t = INEQUALITY_TOL)]
    pub tol: f64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record wall time in the report, which makes it non-reproducible.
    #[arg(long)]
    pub timing: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Verify { common, .. } => common,
            Command::Bound(a)
            | Command::OpenRun(a)
            | Command::Meter(a)
            | Command::Optimize(a)
            | Command::Sweep(a) => &a.common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Verify { .. } => "verify",
            Command::Bound(_) => "bound",
            Command::OpenRun(_) => "open-run",
            Command::Meter(_) => "meter",
            Command::Optimize(_) => "optimize",
            Command::Sweep(_) => "sweep",
        }
    }
}

/// Runs one command and writes its report. Returns an error with exit kind
/// `Violation` when the report shows a broken inequality; the report is
/// still written in that case.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    if common.tol.is_nan() || common.tol < 0.0 {
        return Err(CliError::input("validation", "--tol must be non-negative").at("--tol"));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::input("validation", "--jobs must be positive").at("--jobs"));
        }
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::input("runtime", e.to_string()))?;
    let start = Instant::now();
    let report = pool.install(|| execute(&cli.command))?;
    let mut report = report;
    if common.timing {
        report.wall_time_seconds = Some(start.elapsed().as_secs_f64());
    }
    let text = emit(&report, common.format)?;
    match &common.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    match violation(&report, common.tol) {
        Some(message) => Err(CliError::violation(message)),
        None => Ok(()),
    }
}

fn load(path: &Path) -> Result<(ScenarioFile, String), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::input("io", format!("{}: {e}", path.display())))?;
    let text =
        String::from_utf8(bytes.clone()).map_err(|e| CliError::input("parse", e.to_string()))?;
    Ok((parse(&text)?, sha256_hex(&bytes)))
}

fn seed_for(file: &ScenarioFile, common: &Common) -> u64 {
    common.seed.or(file.seed).unwrap_or(0)
}

pub fn execute(command: &Command) -> Result<RunReport, CliError> {
    let name = command.name();
    match command {
        Command::Verify {
            common,
            seeds,
            dim,
            probes,
        } => {
            if let Some(d) = dim {
                if *d == 0 {
                    return Err(CliError::input("validation", "--dim must be positive").at("--dim"));
                }
            }
            let config = VerifyConfig {
                seed: common.seed.unwrap_or(0),
                cases: *seeds,
                dim: *dim,
                tol: common.tol,
                probe_cases: *probes,
            };
            let digest = sha256_hex(canonical_json(&config)?.as_bytes());
            let suites = verify_all(&config)?;
            let passed = suites.iter().all(|s| s.passed());
            Ok(RunReport::new(
                name,
                config.seed,
                digest,
                Payload::Verification(Verification {
                    config,
                    suites,
                    passed,
                }),
            ))
        }
        Command::Bound(args) => {
            let (file, digest) = load(&args.scenario)?;
            let seed = seed_for(&file, &args.common);
            let report = closed_report(&file, seed)?;
            Ok(RunReport::new(name, seed, digest, Payload::Work(report)))
        }
        Command::OpenRun(args) => {
            let (file, digest) = load(&args.scenario)?;
            let seed = seed_for(&file, &args.common);
            let report = open_report(&file, seed)?;
            Ok(RunReport::new(name, seed, digest, Payload::Work(report)))
        }
        Command::Meter(args) => {
            let (file, digest) = load(&args.scenario)?;
            let seed = seed_for(&file, &args.common);
            let (scenario, spec) = file.meter()?;
            let protocol = scenario.protocol(spec.steps[0]).at("meter")?;
            let rows = convergence_scan(
                &scenario.initial_state,
                &scenario.joint,
                &protocol,
                &spec.steps,
                spec.shots,
                seed,
            )
            .at("meter")?;
            let dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
            let errors: Vec<f64> = rows.iter().map(|r| r.abs_error).collect();
            let variances: Vec<f64> = rows.iter().map(|r| r.variance).collect();
            let table = MeterTable {
                scenario_id: file.scenario_id(),
                shots: spec.shots,
                reference: rows[0].reference,
                error_slope: log_log_slope(&dts, &errors),
                variance_slope: log_log_slope(&dts, &variances),
                rows,
            };
            Ok(RunReport::new(name, seed, digest, Payload::Meter(table)))
        }
        Command::Optimize(args) => {
            let (file, digest) = load(&args.scenario)?;
            let seed = seed_for(&file, &args.common);
            let (h0, ht) = file.endpoints()?;
            let config = file.optimization_config(seed);
            let mut result = minimize_bound(&h0, &ht, file.beta, &config).at("optimize")?;
            result.best_report = result
                .best_report
                .with_metadata(file.scenario_id(), Some(seed));
            Ok(RunReport::new(
                name,
                seed,
                digest,
                Payload::Optimization(Box::new(result)),
            ))
        }
        Command::Sweep(args) => {
            let (file, digest) = load(&args.scenario)?;
            let seed = seed_for(&file, &args.common);
            let spec = file.sweep.as_ref().ok_or_else(|| {
                CliError::input("validation", "scenario has no sweep block").at("sweep")
            })?;
            if spec.values.is_empty() {
                return Err(CliError::input("validation", "sweep grid is empty").at("sweep.values"));
            }
            let rows = spec
                .values
                .par_iter()
                .map(|&value| {
                    let point = file.with_parameter(spec.parameter, value)?;
                    let mut report = if point.damping.is_empty() {
                        closed_report(&point, seed)?
                    } else {
                        open_report(&point, seed)?
                    };
                    report.metadata.scenario_id = format!(
                        "{}[{}={}]",
                        file.scenario_id(),
                        spec.parameter.name(),
                        value
                    );
                    Ok(SweepRow { value, report })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            Ok(RunReport::new(
                name,
                seed,
                digest,
                Payload::Sweep(Sweep {
                    parameter: spec.parameter.name().into(),
                    rows,
                }),
            ))
        }
    }
}

fn closed_report(file: &ScenarioFile, seed: u64) -> Result<WorkReport, CliError> {
    let c = file.closed(seed)?;
    Ok(
        work_report_unchecked(&c.decomposition, &c.unitary, &c.h0, &c.ht, file.beta)
            .at("protocol")?
            .with_metadata(file.scenario_id(), Some(seed)),
    )
}

fn open_report(file: &ScenarioFile, seed: u64) -> Result<WorkReport, CliError> {
    let (protocol, steps) = file.driving()?;
    let schedule = file.schedule()?;
    schedule.check_against(&protocol).at("damping")?;
    let decomposition = file.decomposition(&protocol.initial_hamiltonian(), seed)?;
    Ok(
        open_work_report_unchecked(&decomposition, &schedule, &protocol, steps)
            .at("damping")?
            .with_metadata(file.scenario_id(), Some(seed)),
    )
}

/// Description of the first broken inequality in a report, if any.
pub fn violation(report: &RunReport, tol: f64) -> Option<String> {
    let work = |r: &WorkReport| {
        r.check(tol)
            .err()
            .map(|e| format!("{}: {e}", r.metadata.scenario_id))
    };
    match &report.payload {
        Payload::Work(r) => work(r),
        Payload::Sweep(s) => s.rows.iter().find_map(|row| work(&row.report)),
        Payload::Optimization(o) => {
            let slack = tol * o.delta_f.abs().max(1.0);
            (o.min_evaluated < o.delta_f - slack).then(|| {
                format!(
                    "evaluated ΔF̃ = {} lies below ΔF = {}",
                    o.min_evaluated, o.delta_f
                )
            })
        }
        Payload::Verification(v) => {
            let failed: Vec<String> = v
                .suites
                .iter()
                .filter(|s| !s.passed())
                .map(|s| format!("{} ({} of {} cases)", s.name, s.violations, s.cases))
                .collect();
            (!failed.is_empty()).then(|| format!("suites failed: {}", failed.join(", ")))
        }
        Payload::Meter(_) => None,
    }
}
