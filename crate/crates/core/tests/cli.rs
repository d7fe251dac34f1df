//! End-to-end runs of the `adhm-kit` binary: exit statuses, report
//! shapes, determinism, and record round-trips.

use std::path::Path;
use std::process::{Command, Output};

fn adhm_kit(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_adhm-kit"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

fn lines(output: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&output.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("report lines are JSON"))
        .collect()
}

fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .expect("report file exists")
        .lines()
        .map(|l| serde_json::from_str(l).expect("report lines are JSON"))
        .collect()
}

#[test]
fn invalid_configurations_exit_with_status_two() {
    let cases: &[&[&str]] = &[
        &["sample", "--geometry", "s4", "--k", "0"],
        &["sample", "--geometry", "p2", "--k", "1", "--r", "1", "--zeta", "1.5"],
        &["sample", "--geometry", "s4", "--k", "3", "--r", "2"],
        &["check", "--geometry", "p2", "--k", "1", "--r", "1", "--samples", "0"],
        &["field", "--k", "1", "--r", "3"],
        &["field", "--k", "1", "--r", "2", "--zeta", "0.5"],
        &["resolve", "--geometry", "s4", "--k", "1", "--r", "1"],
        &["identities", "--geometry", "s4", "--k", "1", "--r", "1"],
        &["homotopy-verify", "--geometry", "p2", "--k", "1", "--r", "1", "--zeta", "-0.5"],
        &["flow", "--k", "1", "--r", "1", "--tol", "-1"],
    ];
    for args in cases {
        let out = adhm_kit(args, &[]);
        assert_eq!(
            out.status.code(),
            Some(2),
            "expected exit 2 for {args:?}, stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(
            !out.stderr.is_empty(),
            "expected an actionable message for {args:?}"
        );
    }
}

#[test]
fn help_lists_every_subcommand() {
    let out = adhm_kit(&["--help"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for name in [
        "sample",
        "check",
        "flow",
        "homotopy-verify",
        "dimension",
        "resolve",
        "field",
        "identities",
    ] {
        assert!(text.contains(name), "help is missing `{name}`");
    }
}

#[test]
fn p2_check_batch_reports_no_first_condition_failures() {
    let out = adhm_kit(
        &[
            "check",
            "--geometry",
            "p2",
            "--k",
            "2",
            "--r",
            "3",
            "--zeta",
            "0.5",
            "--samples",
            "50",
            "--seed",
            "1",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let records = lines(&out);
    let summary = records.last().expect("summary record");
    assert_eq!(summary["record"], "summary");
    assert_eq!(summary["c1p_fails"], 0);
    assert_eq!(summary["violations"], 0);
    assert_eq!(records.len(), 51);
}

#[test]
fn s4_homotopy_batch_stays_within_the_residual_bound() {
    let out = adhm_kit(
        &[
            "homotopy-verify",
            "--geometry",
            "s4",
            "--k",
            "1",
            "--r",
            "1",
            "--zeta",
            "0.5",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let records = lines(&out);
    let summary = records.last().expect("summary record");
    assert!(summary["max_level_residual"].as_f64().unwrap() <= 1e-11);
    assert!(summary["max_integrability_residual"].as_f64().unwrap() <= 1e-11);
    for rec in &records[..records.len() - 1] {
        assert_eq!(rec["record"], "homotopy");
        assert_eq!(rec["report"]["endpoint_constancy"], true);
        assert_eq!(rec["report"]["regularity_failures"], 0);
    }
}

#[test]
fn reports_are_byte_identical_across_thread_counts() {
    let args = [
        "check",
        "--geometry",
        "p2",
        "--k",
        "2",
        "--r",
        "3",
        "--zeta",
        "0.5",
        "--samples",
        "10",
        "--seed",
        "7",
    ];
    let narrow = adhm_kit(&args, &[("ADHM_KIT_THREADS", "1")]);
    let wide = adhm_kit(&args, &[("ADHM_KIT_THREADS", "4")]);
    assert_eq!(narrow.status.code(), Some(0));
    assert_eq!(narrow.stdout, wide.stdout);

    let again = adhm_kit(&args, &[("ADHM_KIT_THREADS", "4")]);
    assert_eq!(wide.stdout, again.stdout);
}

#[test]
fn emitted_records_revalidate_when_read_back() {
    let dir = tempfile::tempdir().expect("temp dir");
    let sample_path = dir.path().join("samples.ndjson");
    let flow_path = dir.path().join("flows.ndjson");

    let out = adhm_kit(
        [
            "sample", "--geometry", "p2", "--k", "2", "--r", "4", "--samples", "6", "--seed",
            "5", "--out",
        ]
        .iter()
        .chain(&[sample_path.to_str().unwrap()])
        .copied()
        .collect::<Vec<_>>()
        .as_slice(),
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty(), "file output must not echo to stdout");
    assert_eq!(read_lines(&sample_path).len(), 7);

    let recheck = adhm_kit(
        &[
            "check",
            "--geometry",
            "p2",
            "--k",
            "2",
            "--r",
            "4",
            "--input",
            sample_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(recheck.status.code(), Some(0));
    let records = lines(&recheck);
    assert_eq!(records.last().unwrap()["samples"], 6);

    // Records carry their own geometry, so revalidation must not need
    // the original flags.
    let recheck = adhm_kit(&["check", "--input", sample_path.to_str().unwrap()], &[]);
    assert_eq!(recheck.status.code(), Some(0));
    let records = lines(&recheck);
    assert_eq!(records.last().unwrap()["samples"], 6);
    assert_eq!(records.last().unwrap()["violations"], 0);

    let out = adhm_kit(
        &[
            "flow",
            "--geometry",
            "s4",
            "--k",
            "2",
            "--r",
            "3",
            "--zeta",
            "-0.5",
            "--samples",
            "4",
            "--seed",
            "2",
            "--out",
            flow_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));

    let recheck = adhm_kit(
        &[
            "check",
            "--geometry",
            "s4",
            "--k",
            "2",
            "--r",
            "3",
            "--input",
            flow_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(recheck.status.code(), Some(0));

    // A doctored level value must be caught on re-read and keep the
    // violating record in the report.
    let doctored = std::fs::read_to_string(&flow_path)
        .unwrap()
        .replace("\"zeta\":-0.5", "\"zeta\":-0.25");
    let doctored_path = dir.path().join("doctored.ndjson");
    std::fs::write(&doctored_path, doctored).unwrap();
    let recheck = adhm_kit(
        &[
            "check",
            "--geometry",
            "s4",
            "--k",
            "2",
            "--r",
            "3",
            "--input",
            doctored_path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(recheck.status.code(), Some(1));
    let records = lines(&recheck);
    assert!(records
        .iter()
        .any(|r| r["record"] == "error" && r["violation"] == true));
}

#[test]
fn field_run_reports_the_unit_charge() {
    let out = adhm_kit(
        &["field", "--k", "1", "--r", "2", "--samples", "2000", "--seed", "3"],
        &[],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let records = lines(&out);
    let charge = records
        .iter()
        .find(|r| r["record"] == "charge")
        .expect("charge record");
    assert!((charge["report"]["charge"].as_f64().unwrap() - 1.0).abs() < 0.05);
    assert!(charge["report"]["asd_max"].as_f64().unwrap() <= 1e-3);
    let points = records.iter().filter(|r| r["record"] == "field-point");
    assert_eq!(points.count(), 3);
}

#[test]
fn dimension_batch_matches_the_expected_count() {
    let out = adhm_kit(
        &[
            "dimension",
            "--geometry",
            "p2",
            "--k",
            "1",
            "--r",
            "2",
            "--zeta",
            "0.5",
            "--samples",
            "4",
            "--seed",
            "11",
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let records = lines(&out);
    for rec in &records[..records.len() - 1] {
        assert_eq!(rec["tangent_dimension"], 8);
        assert_eq!(rec["df"], "Holds");
    }
    assert_eq!(records.last().unwrap()["dimension_matches"], 4);
}
