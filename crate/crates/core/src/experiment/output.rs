//! CSV and text artifacts for a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use super::runner::{InverseTable, Outcome, RunRecord};
use crate::dynamics::TracePoint;
use crate::error::{Error, Result};

/// Bumped whenever `RECORD_COLUMNS` changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const RECORD_COLUMNS: [&str; 15] = [
    "schema_version",
    "scenario",
    "system_index",
    "n",
    "beta_or_s",
    "lambda_min",
    "lambda_m_min",
    "u_min",
    "tau_measured_s",
    "tau_bound_s",
    "converged",
    "diverged",
    "steps",
    "cg_iterations",
    "notes",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_row(r: &RunRecord) -> Vec<String> {
    let mut notes = vec![format!("digest={}", r.digest)];
    notes.extend(r.notes.iter().cloned());
    vec![
        SCHEMA_VERSION.to_string(),
        r.scenario.id().to_string(),
        r.system_index.to_string(),
        r.n.to_string(),
        opt(r.beta_or_s),
        r.lambda_min.to_string(),
        r.lambda_m_min.to_string(),
        r.u_min.to_string(),
        opt(r.tau_measured_s),
        opt(r.tau_bound_s),
        r.converged.to_string(),
        r.diverged.to_string(),
        r.steps.to_string(),
        opt(r.cg_iterations),
        notes.join(";"),
    ]
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Numerical(format!("CSV encoding failed: {other:?}")),
    }
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Render `records.csv` in memory.
pub fn records_csv(records: &[RunRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::Numerical(format!("CSV encoding failed: {e}"));
    w.write_record(RECORD_COLUMNS).map_err(fail)?;
    for r in records {
        w.write_record(record_row(r)).map_err(fail)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numerical(format!("CSV encoding failed: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

/// Re-check that every converged record is within its tolerance.
fn verify(records: &[RunRecord]) -> Result<()> {
    for r in records.iter().filter(|r| r.converged) {
        match r.final_error {
            Some(e) if e <= r.epsilon => {}
            other => {
                return Err(Error::Numerical(format!(
                    "system {} is marked converged but has error {other:?} > {}",
                    r.system_index, r.epsilon
                )))
            }
        }
    }
    Ok(())
}

/// Write `records.csv`, `summary.txt` and, when present, `trace.csv` and
/// `inverse.csv` into `dir`. Returns the written paths.
pub fn emit_outputs(outcome: &Outcome, dir: &Path) -> Result<Vec<PathBuf>> {
    if outcome.records.is_empty() {
        return Err(Error::Usage("no records to write".into()));
    }
    verify(&outcome.records)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("records.csv");
    let header: Vec<String> = RECORD_COLUMNS.iter().map(|s| s.to_string()).collect();
    write_csv(&path, &header, outcome.records.iter().map(record_row))?;
    written.push(path);

    let path = dir.join("summary.txt");
    let mut text = outcome.summary.join("\n");
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if let Some(trace) = &outcome.trace {
        let path = dir.join("trace.csv");
        write_trace(&path, trace)?;
        written.push(path);
    }
    if let Some(inv) = &outcome.inverse {
        let path = dir.join("inverse.csv");
        write_inverse(&path, inv)?;
        written.push(path);
    }
    Ok(written)
}

fn write_trace(path: &Path, trace: &[TracePoint]) -> Result<()> {
    let n = trace.first().map_or(0, |p| p.x.len());
    let mut header = vec!["step".to_string(), "t_s".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.push("error".to_string());
    let rows = trace.iter().map(|p| {
        let mut row = vec![p.step.to_string(), p.t.to_string()];
        row.extend(p.x.iter().map(|v| v.to_string()));
        row.push(p.error.to_string());
        row
    });
    write_csv(path, &header, rows)
}

fn write_inverse(path: &Path, inv: &InverseTable) -> Result<()> {
    let header: Vec<String> = ["row", "col", "computed", "reference", "rel_error"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (nr, nc) = inv.computed.shape();
    let rows = (0..nr).flat_map(|i| {
        (0..nc).map(move |j| {
            let c = inv.computed[(i, j)];
            let r = inv.reference[(i, j)];
            vec![
                i.to_string(),
                j.to_string(),
                c.to_string(),
                r.to_string(),
                ((c - r).abs() / r.abs()).to_string(),
            ]
        })
    });
    write_csv(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_experiment, ExperimentSpec, Scenario};

    #[test]
    fn empty_records_rejected() {
        let out = Outcome {
            scenario: Scenario::Transient,
            records: vec![],
            summary: vec![],
            trace: None,
            inverse: None,
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_outputs(&out, dir.path()), Err(Error::Usage(_))));
    }

    #[test]
    fn single_transient_record() {
        let out = run_experiment(&ExperimentSpec::new(Scenario::Transient, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_outputs(&out, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let text = fs::read_to_string(dir.path().join("records.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], RECORD_COLUMNS.join(","));
        assert!(lines[1].starts_with("1,transient,0,3,,"));
        assert_eq!(text, records_csv(&out.records).unwrap());
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let out = run_experiment(&ExperimentSpec::new(Scenario::Transient, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_outputs(&out, &blocker.join("sub")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.exit_code(), 4);
    }
}
