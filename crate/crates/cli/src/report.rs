//! Machine-readable reports: one row per (instance, task), written as
//! RFC-4180 CSV and as JSON with identical content. The distinguished value
//! `+∞` is always rendered as the string "inf", never as a float infinity.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use regulab_core::newton::NewtonTrace;

/// Fixed CSV column set; absent values render as empty cells.
pub const CSV_COLUMNS: &[&str] = &[
    "instance_id",
    "task",
    "q",
    "delta",
    "mu",
    "resolution",
    "tau_hat",
    "capped",
    "witness_x",
    "witness_y",
    "rg_f",
    "lip_f",
    "rg_fplusf",
    "margin",
    "vacuous",
    "verdict",
    "residual",
    "admissible",
    "iterations",
    "converged",
    "exponent_hat",
    "gamma_hat",
    "pass",
    "error",
    "wall_time_ms",
];

#[derive(Clone, Debug, Serialize)]
pub struct ReportRow {
    pub instance_id: String,
    pub task: String,
    /// Flattened query parameters, string-rendered.
    pub parameters: BTreeMap<String, String>,
    /// Task-specific outputs, string-rendered ("inf" for +∞).
    pub outputs: BTreeMap<String, String>,
    pub pass: Option<bool>,
    pub wall_time_ms: u64,
}

impl ReportRow {
    pub fn new(instance_id: &str, task: &str) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            task: task.to_string(),
            parameters: BTreeMap::new(),
            outputs: BTreeMap::new(),
            pass: None,
            wall_time_ms: 0,
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.parameters.insert(key.to_string(), value.to_string());
        self
    }

    pub fn output(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.outputs.insert(key.to_string(), value.to_string());
        self
    }

    pub fn is_error(&self) -> bool {
        self.outputs.contains_key("error")
    }

    fn cell(&self, column: &str) -> String {
        match column {
            "instance_id" => self.instance_id.clone(),
            "task" => self.task.clone(),
            "pass" => self.pass.map(|p| p.to_string()).unwrap_or_default(),
            "wall_time_ms" => self.wall_time_ms.to_string(),
            _ => self
                .parameters
                .get(column)
                .or_else(|| self.outputs.get(column))
                .cloned()
                .unwrap_or_default(),
        }
    }
}

/// Renders a vector as a semicolon-joined coordinate list.
pub fn join_coords(coords: &[f64]) -> String {
    coords.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}


pub fn write_reports(rows: &[ReportRow], out_dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    write_csv(rows, &out_dir.join("report.csv"))?;
    write_json(rows, &out_dir.join("report.json"))?;
    Ok(())
}

fn write_csv(rows: &[ReportRow], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        let record: Vec<String> = CSV_COLUMNS.iter().map(|c| row.cell(c)).collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(rows: &[ReportRow], path: &Path) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    writeln!(f, "{text}")?;
    Ok(())
}

/// Convergence table: iter, semicolon-joined iterate, residual, error to the
/// reference (when present) and the quadratic ratio e_{k+1}/e_k²; the last
/// row leaves the ratio empty.
pub fn emit_convergence_table(trace: &NewtonTrace<f64>, path: &Path) -> std::io::Result<()> {
    assert!(!trace.iterates.is_empty(), "trace must contain the starting point");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "x", "residual", "error_to_ref", "ratio"])?;
    let errors = trace.errors_to_ref.as_deref();
    for (k, x) in trace.iterates.iter().enumerate() {
        let err = errors.map(|e| e[k].to_string()).unwrap_or_default();
        let ratio = match errors {
            Some(e) if k + 1 < e.len() && e[k] > 0.0 => (e[k + 1] / (e[k] * e[k])).to_string(),
            _ => String::new(),
        };
        w.write_record([
            k.to_string(),
            join_coords(x.coords()),
            trace.residuals[k].to_string(),
            err,
            ratio,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use regulab_core::Vector64;

    #[test]
    fn csv_and_json_share_values() {
        let mut row = ReportRow::new("a", "estimate-rg");
        row.param("q", 0.5).output("tau_hat", "inf");
        row.pass = Some(true);
        let dir = tempfile::tempdir().unwrap();
        write_reports(&[row], dir.path()).unwrap();
        let csv_text = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        let json_text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(csv_text.contains("inf"));
        assert!(json_text.contains("\"tau_hat\": \"inf\""));
        assert!(json_text.contains("\"pass\": true"));
    }

    #[test]
    fn one_iterate_table_has_empty_ratio() {
        let trace = NewtonTrace {
            iterates: vec![Vector64::new(vec![1.0])],
            residuals: vec![regulab_core::ExtReal::finite(0.0)],
            errors_to_ref: None,
            rate: None,
            converged: true,
            failure: None,
        }
        .with_reference(&Vector64::new(vec![1.0]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        emit_convergence_table(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.trim().lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].ends_with(','));
    }
}
