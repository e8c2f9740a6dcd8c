//! End-to-end tests of the `regulab` binary: batch runs, reports, the
//! convergence table, exit codes and determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn regulab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_regulab"))
}

fn instances_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../instances")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_json_rows(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn acceptance_batch_all_pass() {
    let out_dir = tempfile::tempdir().unwrap();
    run_ok(
        regulab()
            .arg("run")
            .arg(instances_dir().join("acceptance_batch.json"))
            .arg("--out")
            .arg(out_dir.path())
            .arg("--seed")
            .arg("3"),
    );
    let rows = read_json_rows(out_dir.path());
    let rows = rows.as_array().unwrap();
    assert!(rows.len() >= 10, "expected 10+ rows, got {}", rows.len());
    for row in rows {
        assert_eq!(
            row["pass"],
            serde_json::Value::Bool(true),
            "row {} did not pass: {row}",
            row["instance_id"]
        );
    }
    // Newton rows leave convergence tables behind.
    assert!(out_dir.path().join("trace_newton-sqrt2.csv").exists());
}

#[test]
fn csv_and_json_carry_identical_values() {
    let out_dir = tempfile::tempdir().unwrap();
    run_ok(
        regulab()
            .arg("run")
            .arg(instances_dir().join("cubic.json"))
            .arg("--out")
            .arg(out_dir.path()),
    );
    let csv_text = std::fs::read_to_string(out_dir.path().join("report.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().unwrap().clone();
    let rows = read_json_rows(out_dir.path());
    for (record, json_row) in reader.records().zip(rows.as_array().unwrap()) {
        let record = record.unwrap();
        for (col, cell) in headers.iter().zip(record.iter()) {
            if cell.is_empty() {
                continue;
            }
            let found = match col {
                "instance_id" | "task" => json_row[col].as_str().unwrap().to_string(),
                "pass" => json_row["pass"].to_string(),
                "wall_time_ms" => json_row["wall_time_ms"].to_string(),
                _ => json_row["parameters"][col]
                    .as_str()
                    .or_else(|| json_row["outputs"][col].as_str())
                    .unwrap_or_else(|| panic!("column {col} missing from JSON"))
                    .to_string(),
            };
            assert_eq!(cell, found, "column {col} differs between CSV and JSON");
        }
    }
}

#[test]
fn same_seed_same_report() {
    let strip = |dir: &Path| {
        let mut rows = read_json_rows(dir);
        for row in rows.as_array_mut().unwrap() {
            row.as_object_mut().unwrap().insert("wall_time_ms".into(), 0.into());
        }
        rows
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        run_ok(
            regulab()
                .arg("run")
                .arg(instances_dir().join("acceptance_batch.json"))
                .arg("--out")
                .arg(dir.path())
                .arg("--seed")
                .arg("11")
                .arg("--parallel")
                .arg(if std::ptr::eq(dir, &a) { "1" } else { "4" }),
        );
    }
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn estimate_prints_rows() {
    let out = run_ok(regulab().arg("estimate").arg(instances_dir().join("cubic.json")));
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let row = &rows.as_array().unwrap()[0];
    assert_eq!(row["instance_id"], "cubic-rg");
    assert_eq!(row["parameters"]["q"], "0.3333333333333333");
    assert_eq!(row["pass"], true);
}

#[test]
fn newton_subcommand_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("table.csv");
    let out = run_ok(
        regulab()
            .arg("newton")
            .arg(instances_dir().join("newton_sqrt2.json"))
            .arg("--x0")
            .arg("3.0")
            .arg("--tol")
            .arg("1e-12")
            .arg("--table")
            .arg(&table),
    );
    let row: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(row["outputs"]["converged"], "true");
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.trim().lines().collect();
    assert!(lines.len() >= 5 && lines.len() <= 9, "unexpected table length {}", lines.len());
    let final_residual: f64 = lines
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(final_residual <= 1e-12);
}

#[test]
fn empty_batch_is_success() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("empty.json");
    std::fs::write(&batch, "{\"schema\":1,\"instances\":[]}").unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    run_ok(regulab().arg("run").arg(&batch).arg("--out").arg(out_dir.path()));
    let rows = read_json_rows(out_dir.path());
    assert!(rows.as_array().unwrap().is_empty());
}

#[test]
fn runtime_failure_marks_row_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("mixed.json");
    // The second instance is structurally valid but its base point is off
    // the graph, which the estimator rejects at run time.
    std::fs::write(
        &batch,
        r#"{
  "schema": 1,
  "instances": [
    {
      "id": "good",
      "task": "estimate-rg",
      "mapping": { "kind": "linear", "matrix": [[1.0]] },
      "base_point": { "x": [0.0], "y": [0.0] },
      "q": 1.0,
      "estimator": { "delta": 0.5, "resolution": 21, "refinement_levels": 1 }
    },
    {
      "id": "off-graph",
      "task": "estimate-rg",
      "mapping": { "kind": "linear", "matrix": [[1.0]] },
      "base_point": { "x": [0.0], "y": [0.7] },
      "q": 1.0,
      "estimator": { "delta": 0.5, "resolution": 21, "refinement_levels": 1 }
    }
  ]
}"#,
    )
    .unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = regulab()
        .arg("run")
        .arg(&batch)
        .arg("--out")
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let rows = read_json_rows(out_dir.path());
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["outputs"]["tau_hat"].is_string());
    assert!(rows[1]["outputs"]["error"].as_str().unwrap().contains("graph"));
}

#[test]
fn duplicate_ids_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("dup.json");
    let inst = r#"{
      "id": "twin",
      "task": "estimate-rg",
      "mapping": { "kind": "linear", "matrix": [[1.0]] },
      "base_point": { "x": [0.0], "y": [0.0] },
      "q": 1.0,
      "estimator": { "delta": 0.5, "resolution": 21, "refinement_levels": 1 }
    }"#;
    std::fs::write(&batch, format!("{{\"schema\":1,\"instances\":[{inst},{inst}]}}")).unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = regulab()
        .arg("run")
        .arg(&batch)
        .arg("--out")
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("twin"));
}

#[test]
fn unknown_fields_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("unknown.json");
    std::fs::write(
        &batch,
        r#"{
  "schema": 1,
  "instances": [
    {
      "id": "weird",
      "task": "estimate-rg",
      "mapping": { "kind": "linear", "matrix": [[1.0]] },
      "base_point": { "x": [0.0], "y": [0.0] },
      "q": 1.0,
      "surprise": 7,
      "estimator": { "delta": 0.5, "resolution": 21, "refinement_levels": 1 }
    }
  ]
}"#,
    )
    .unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = regulab()
        .arg("run")
        .arg(&batch)
        .arg("--out")
        .arg(out_dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_seed_overrides_flag() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    // Same env seed with different flags must agree.
    for (dir, flag_seed) in [(&a, "1"), (&b, "2")] {
        run_ok(
            regulab()
                .arg("run")
                .arg(instances_dir().join("cubic.json"))
                .arg("--out")
                .arg(dir.path())
                .arg("--seed")
                .arg(flag_seed)
                .env("REGULAB_SEED", "77"),
        );
    }
    let strip = |dir: &Path| {
        let mut rows = read_json_rows(dir);
        for row in rows.as_array_mut().unwrap() {
            row.as_object_mut().unwrap().insert("wall_time_ms".into(), 0.into());
        }
        rows
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}
