use std::path::PathBuf;
use std::process::{Command, Output};

use qfluct::driving::{OutcomeWork, WorkMetadata, WorkReport};
use qfluct_cli::commands::violation;
use qfluct_cli::report::{canonical_json, parse_report, Payload, RunReport, WORK_COLUMNS};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn qfluct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfluct"))
        .current_dir(root())
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stderr).expect("stderr is one JSON object")
}

fn write_scenario(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn bound_qubit_csv_matches_closed_form() {
    let out = qfluct(&["bound", "scenarios/closed_qubit.json", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), WORK_COLUMNS.join(","));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let field = |name: &str| -> f64 {
        row[WORK_COLUMNS.iter().position(|c| *c == name).unwrap()]
            .parse()
            .unwrap()
    };
    let ratio = 2.0_f64.cosh() / 1.0_f64.cosh();
    assert!((field("estimator") - ratio).abs() < 1e-10);
    assert!((field("delta_F") + ratio.ln()).abs() < 1e-10);
    assert!((field("delta_F_tilde") - field("delta_F")).abs() < 1e-10);
    assert_eq!(row[0], "closed_qubit");
}

#[test]
fn verify_dim_three_has_no_violations() {
    let out = qfluct(&[
        "verify", "--seeds", "1000", "--dim", "3", "--probes", "2000",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    match parse_report(&String::from_utf8(out.stdout).unwrap())
        .unwrap()
        .payload
    {
        Payload::Verification(v) => {
            assert!(v.passed);
            assert!(v.suites.iter().all(|s| s.violations == 0));
            assert_eq!(v.config.dim, Some(3));
        }
        _ => panic!("unexpected payload"),
    }
}

#[test]
fn non_hermitian_input_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        "bad.json",
        r#"{"version": "1", "beta": 1.0,
            "hamiltonians": {"h0": [[[1, 0], [2, 0]], [[0, 0], [-1, 0]]],
                             "ht": [[[1, 0], [0, 0]], [[0, 0], [-1, 0]]]},
            "protocol": {"type": "sudden", "from": "h0", "to": "ht"}}"#,
    );
    let out = qfluct(&["bound", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["category"], "validation");
    assert_eq!(err["path"], "hamiltonians.h0");
    assert!(out.stdout.is_empty());
}

#[test]
fn malformed_json_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        "bad.json",
        r#"{"version": "1", "beta": 1.0, "decomposition": {"type": "povm_random", "m": "three"}}"#,
    );
    let out = qfluct(&["bound", &path]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["category"], "parse");
    assert!(err["path"].as_str().unwrap().starts_with("decomposition"));
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(
        &dir,
        "bad.json",
        r#"{"version": "1", "beta": 1.0, "betta": 2.0}"#,
    );
    let out = qfluct(&["bound", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_json(&out)["message"]
        .as_str()
        .unwrap()
        .contains("betta"));
}

#[test]
fn damping_hamiltonian_mismatch_is_input_error() {
    let text = std::fs::read_to_string(root().join("scenarios/open_qubit.json"))
        .unwrap()
        .replace(
            r#""time": 1.0, "hamiltonian": "h1""#,
            r#""time": 1.0, "hamiltonian": "h2""#,
        );
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(&dir, "open.json", &text);
    let out = qfluct(&["open-run", &path]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["path"], "damping");
}

#[test]
fn missing_file_is_io_error() {
    let out = qfluct(&["bound", "no/such/file.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["category"], "io");
}

#[test]
fn out_flag_writes_file_and_timing_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("report.json");
    let out = qfluct(&[
        "open-run",
        "scenarios/open_qubit.json",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&target).unwrap();
    let report = parse_report(&text).unwrap();
    assert!(report.wall_time_seconds.is_none());
    assert_eq!(report.seed, 7);
    assert_eq!(report.input_digest.len(), 64);

    let timed = qfluct(&["open-run", "scenarios/open_qubit.json", "--timing"]);
    let report = parse_report(&String::from_utf8(timed.stdout).unwrap()).unwrap();
    assert!(report.wall_time_seconds.is_some());
}

#[test]
fn reports_round_trip_byte_identically() {
    for args in [
        &["bound", "scenarios/closed_qubit.json"][..],
        &["meter", "scenarios/meter_qubit.json"][..],
        &["sweep", "scenarios/closed_qubit.json"][..],
    ] {
        let text = String::from_utf8(qfluct(args).stdout).unwrap();
        let again = canonical_json(&parse_report(&text).unwrap()).unwrap();
        assert_eq!(text, again, "{args:?}");
    }
}

#[test]
fn seed_changes_random_decomposition_only_when_undeclared() {
    let text = std::fs::read_to_string(root().join("scenarios/open_qubit.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let unseeded = write_scenario(&dir, "u.json", &text.replace(r#", "seed": 11"#, ""));
    let a = qfluct(&["open-run", &unseeded, "--seed", "1", "--format", "csv"]);
    let b = qfluct(&["open-run", &unseeded, "--seed", "2", "--format", "csv"]);
    assert_ne!(a.stdout, b.stdout);
    let seeded = qfluct(&[
        "open-run",
        "scenarios/open_qubit.json",
        "--seed",
        "1",
        "--format",
        "csv",
    ]);
    let seeded2 = qfluct(&[
        "open-run",
        "scenarios/open_qubit.json",
        "--seed",
        "2",
        "--format",
        "csv",
    ]);
    let strip = |o: &Output| {
        let t = String::from_utf8(o.stdout.clone()).unwrap();
        t.lines()
            .nth(1)
            .unwrap()
            .rsplit_once(',')
            .unwrap()
            .0
            .to_string()
    };
    assert_eq!(strip(&seeded), strip(&seeded2));
}

#[test]
fn sweep_rows_follow_grid_order() {
    let out = qfluct(&[
        "sweep",
        "scenarios/open_qubit.json",
        "--format",
        "csv",
        "--jobs",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let ids: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        ids,
        [
            "open_qubit[lambda=0]",
            "open_qubit[lambda=0.25]",
            "open_qubit[lambda=0.5]",
            "open_qubit[lambda=0.75]",
            "open_qubit[lambda=1]"
        ]
    );
}

#[test]
fn meter_csv_has_one_row_per_step_count() {
    let out = qfluct(&["meter", "scenarios/meter_qubit.json", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "steps,dt,total,reference,abs_error,variance"
    );
    let steps: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(steps, ["8", "16", "32", "64"]);
}

#[test]
fn broken_chain_is_classified_as_violation() {
    let work = WorkReport::from_outcomes(
        1.0,
        vec![OutcomeWork {
            probability: 1.0,
            work: 0.0,
        }],
        0.5,
        WorkMetadata::default(),
    )
    .unwrap();
    let report = RunReport::new("bound", 0, String::new(), Payload::Work(work));
    assert!(violation(&report, 1e-9).is_some());
}

#[test]
fn invalid_jobs_is_rejected() {
    let out = qfluct(&["bound", "scenarios/closed_qubit.json", "--jobs", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["path"], "--jobs");
}
