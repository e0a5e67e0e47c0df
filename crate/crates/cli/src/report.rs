//! Run reports and their canonical JSON and CSV encodings.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use qfluct::driving::WorkReport;
use qfluct::meter::ScanRow;
use qfluct::optimize::OptimizationResult;
use qfluct::suites::{SuiteResult, VerifyConfig};

use crate::error::CliError;

pub const TOOL: &str = "qfluct";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Columns of every work-report CSV, in order.
pub const WORK_COLUMNS: [&str; 9] = [
    "scenario_id",
    "beta",
    "W_avg",
    "delta_F_tilde",
    "delta_F",
    "estimator",
    "gap_jensen",
    "gap_quantum",
    "seed",
];

pub const METER_COLUMNS: [&str; 6] = ["steps", "dt", "total", "reference", "abs_error", "variance"];

pub const SUITE_COLUMNS: [&str; 7] = [
    "suite",
    "cases",
    "violations",
    "worst_relative_gap",
    "max_residual",
    "tolerance",
    "seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the scenario bytes, or of the canonical run configuration
    /// when no scenario file is involved.
    pub input_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
    pub payload: Payload,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum Payload {
    Work(WorkReport),
    Meter(MeterTable),
    Optimization(Box<OptimizationResult>),
    Verification(Verification),
    Sweep(Sweep),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeterTable {
    pub scenario_id: String,
    pub shots: usize,
    pub reference: f64,
    pub rows: Vec<ScanRow>,
    /// Log-log slope of `|Σ⟨Ω_n⟩ − ⟨w⟩|` against `Δt`.
    pub error_slope: f64,
    /// Log-log slope of the sampled variance against `Δt`.
    pub variance_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub config: VerifyConfig,
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: WorkReport,
}

impl RunReport {
    pub fn new(command: &str, seed: u64, input_digest: String, payload: Payload) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            input_digest,
            wall_time_seconds: None,
            payload,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".into()
    }
}

/// JSON with sorted keys, two-space indentation and every float written with
/// 17 significant digits.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let v =
        serde_json::to_value(value).map_err(|e| CliError::input("serialization", e.to_string()))?;
    let mut out = String::new();
    write_value(&v, 0, &mut out);
    out.push('\n');
    Ok(out)
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            _ if n.is_f64() => out.push_str(&float(n.as_f64().unwrap_or(f64::NAN))),
            (Some(u), _) => out.push_str(&u.to_string()),
            (None, Some(i)) => out.push_str(&i.to_string()),
            _ => out.push_str(&n.to_string()),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(item, indent + 1, out);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (k, key) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&Value::String((*key).clone()).to_string());
                out.push_str(": ");
                write_value(&map[key.as_str()], indent + 1, out);
                out.push_str(if k + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

pub fn parse_report(text: &str) -> Result<RunReport, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::input("parse", e.to_string()))
}

fn work_row(r: &WorkReport, fallback_seed: u64) -> Vec<String> {
    vec![
        r.metadata.scenario_id.clone(),
        float(r.beta),
        float(r.w_avg),
        float(r.delta_f_tilde),
        float(r.delta_f),
        float(r.estimator),
        float(r.gap_jensen),
        float(r.gap_quantum),
        r.metadata.seed.unwrap_or(fallback_seed).to_string(),
    ]
}

/// CSV rendering: work reports (including sweeps and the optimizer's best
/// point) use [`WORK_COLUMNS`], meter scans [`METER_COLUMNS`] and
/// verification runs [`SUITE_COLUMNS`].
pub fn csv(report: &RunReport) -> Result<String, CliError> {
    let (header, rows): (&[&str], Vec<Vec<String>>) = match &report.payload {
        Payload::Work(r) => (&WORK_COLUMNS, vec![work_row(r, report.seed)]),
        Payload::Optimization(o) => (&WORK_COLUMNS, vec![work_row(&o.best_report, report.seed)]),
        Payload::Sweep(s) => (
            &WORK_COLUMNS,
            s.rows
                .iter()
                .map(|r| work_row(&r.report, report.seed))
                .collect(),
        ),
        Payload::Meter(m) => (
            &METER_COLUMNS,
            m.rows
                .iter()
                .map(|r| {
                    vec![
                        r.steps.to_string(),
                        float(r.dt),
                        float(r.total),
                        float(r.reference),
                        float(r.abs_error),
                        float(r.variance),
                    ]
                })
                .collect(),
        ),
        Payload::Verification(v) => (
            &SUITE_COLUMNS,
            v.suites
                .iter()
                .map(|s| {
                    vec![
                        s.name.clone(),
                        s.cases.to_string(),
                        s.violations.to_string(),
                        float(s.worst_relative_gap),
                        float(s.max_residual),
                        float(s.tolerance),
                        v.config.seed.to_string(),
                    ]
                })
                .collect(),
        ),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::input("io", e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::input("io", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::input("io", e.to_string()))
}

pub fn emit(report: &RunReport, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => canonical_json(report),
        Format::Csv => csv(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qfluct::driving::{OutcomeWork, WorkMetadata};

    fn sample() -> RunReport {
        let work = WorkReport::from_outcomes(
            0.7,
            vec![
                OutcomeWork {
                    probability: 0.25,
                    work: 1.0 / 3.0,
                },
                OutcomeWork {
                    probability: 0.75,
                    work: -2.5e-7,
                },
            ],
            -0.1,
            WorkMetadata {
                scenario_id: "s".into(),
                seed: Some(3),
                pruned: false,
                pruned_mass: 0.0,
            },
        )
        .unwrap();
        RunReport::new("bound", 3, sha256_hex(b"x"), Payload::Work(work))
    }

    #[test]
    fn json_round_trip_is_idempotent() {
        let first = canonical_json(&sample()).unwrap();
        let second = canonical_json(&parse_report(&first).unwrap()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn floats_keep_full_precision() {
        let text = canonical_json(&sample()).unwrap();
        assert!(text.contains("3.3333333333333331e-1"));
        match parse_report(&text).unwrap().payload {
            Payload::Work(w) => assert_eq!(w.outcomes[0].work, 1.0 / 3.0),
            _ => panic!("wrong payload"),
        }
    }

    #[test]
    fn keys_are_sorted() {
        let text = canonical_json(&serde_json::json!({"b": 1, "a": {"z": 2, "c": 3}})).unwrap();
        assert_eq!(
            text,
            "{\n  \"a\": {\n    \"c\": 3,\n    \"z\": 2\n  },\n  \"b\": 1\n}\n"
        );
    }

    #[test]
    fn csv_header_is_stable() {
        let text = csv(&sample()).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "scenario_id,beta,W_avg,delta_F_tilde,delta_F,estimator,gap_jensen,gap_quantum,seed"
        );
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
