//! Newline-delimited JSON persistence, one file per table.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::{Case, Cohort, Tables, Warehouse};

pub const PATIENTS: &str = "patients.ndjson";
pub const SOMATOMETRY: &str = "somatometry.ndjson";
pub const LABS: &str = "labs.ndjson";
pub const CULTURES: &str = "cultures.ndjson";
pub const ANTIBIOTICS: &str = "antibiotics.ndjson";
pub const CASES: &str = "cases.ndjson";

pub const TABLE_FILES: [&str; 5] = [PATIENTS, SOMATOMETRY, LABS, CULTURES, ANTIBIOTICS];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("missing table file {0}")]
    MissingFile(PathBuf),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{file}:{line}: malformed row: {message}")]
    Malformed { file: String, line: usize, message: String },
    #[error("{file}:{line}: {reason}")]
    Invalid { file: String, line: usize, reason: String },
}

/// Parsed rows alongside their 1-based source line numbers.
struct Rows<T> {
    rows: Vec<T>,
    lines: Vec<usize>,
}

fn read_table<T: DeserializeOwned>(dir: &Path, file: &str) -> Result<Rows<T>, LoadError> {
    let path = dir.join(file);
    if !path.is_file() {
        return Err(LoadError::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|source| LoadError::Io { path: path.clone(), source })?;
    let mut out = Rows { rows: Vec::new(), lines: Vec::new() };
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| LoadError::Malformed {
            file: file.to_owned(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.rows.push(row);
        out.lines.push(idx + 1);
    }
    Ok(out)
}

pub fn load_warehouse(dir: impl AsRef<Path>) -> Result<Warehouse, LoadError> {
    let dir = dir.as_ref();
    let patients = read_table(dir, PATIENTS)?;
    let somatometry = read_table(dir, SOMATOMETRY)?;
    let labs = read_table(dir, LABS)?;
    let cultures = read_table(dir, CULTURES)?;
    let antibiotics = read_table(dir, ANTIBIOTICS)?;

    let line_index = [
        ("patients", PATIENTS, patients.lines),
        ("somatometry", SOMATOMETRY, somatometry.lines),
        ("labs", LABS, labs.lines),
        ("cultures", CULTURES, cultures.lines),
        ("antibiotics", ANTIBIOTICS, antibiotics.lines),
    ];
    let tables = Tables {
        patients: patients.rows,
        somatometry: somatometry.rows,
        labs: labs.rows,
        cultures: cultures.rows,
        antibiotics: antibiotics.rows,
    };
    Warehouse::from_tables(tables).map_err(|e| {
        let (_, file, lines) =
            line_index.iter().find(|(table, _, _)| *table == e.table).expect("validation reports a known table");
        LoadError::Invalid { file: (*file).to_owned(), line: lines.get(e.row).copied().unwrap_or(0), reason: e.reason }
    })
}

/// Loads the warehouse plus `cases.ndjson`.
pub fn load_cohort(dir: impl AsRef<Path>) -> Result<Cohort, LoadError> {
    let dir = dir.as_ref();
    let warehouse = load_warehouse(dir)?;
    let cases: Rows<Case> = read_table(dir, CASES)?;
    for (case, line) in cases.rows.iter().zip(&cases.lines) {
        if warehouse.patient(&case.patient_id).is_err() {
            return Err(LoadError::Invalid {
                file: CASES.to_owned(),
                line: *line,
                reason: format!("patient_id {} does not resolve", case.patient_id),
            });
        }
    }
    Ok(Cohort { warehouse, cases: cases.rows })
}

fn write_table<T: Serialize>(dir: &Path, file: &str, rows: &[T]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(dir.join(file))?);
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_warehouse(warehouse: &Warehouse, dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let t = warehouse.tables();
    write_table(dir, PATIENTS, &t.patients)?;
    write_table(dir, SOMATOMETRY, &t.somatometry)?;
    write_table(dir, LABS, &t.labs)?;
    write_table(dir, CULTURES, &t.cultures)?;
    write_table(dir, ANTIBIOTICS, &t.antibiotics)
}

pub fn write_cohort(cohort: &Cohort, dir: impl AsRef<Path>) -> io::Result<()> {
    let dir = dir.as_ref();
    write_warehouse(&cohort.warehouse, dir)?;
    write_table(dir, CASES, &cohort.cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_empty(dir: &Path) {
        for f in TABLE_FILES {
            fs::write(dir.join(f), "").unwrap();
        }
    }

    #[test]
    fn empty_tables_load() {
        let dir = tempfile::tempdir().unwrap();
        write_empty(dir.path());
        assert!(load_warehouse(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn missing_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_empty(dir.path());
        fs::remove_file(dir.path().join(LABS)).unwrap();
        assert!(matches!(load_warehouse(dir.path()), Err(LoadError::MissingFile(p)) if p.ends_with(LABS)));
    }

    #[test]
    fn malformed_row_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write_empty(dir.path());
        fs::write(dir.path().join(PATIENTS), "\n{not json}\n").unwrap();
        match load_warehouse(dir.path()) {
            Err(LoadError::Malformed { file, line, .. }) => {
                assert_eq!(file, PATIENTS);
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dangling_lab_row_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        write_empty(dir.path());
        fs::write(
            dir.path().join(PATIENTS),
            r#"{"patient_id":"P001","sex":"male","date_of_birth":"1970-01-01","allergies":[],"on_dialysis":false}"#,
        )
        .unwrap();
        let ok = r#"{"record_id":1,"patient_id":"P001","collected_at":"2024-04-22T08:00:00+09:00","analyte":"クレアチニン","value":0.86,"unit":"mg/dL"}"#;
        let bad = r#"{"record_id":2,"patient_id":"P404","collected_at":"2024-04-22T08:00:00+09:00","analyte":"クレアチニン","value":0.9,"unit":"mg/dL"}"#;
        fs::write(dir.path().join(LABS), format!("{ok}\n{bad}\n")).unwrap();
        let err = load_warehouse(dir.path()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, LoadError::Invalid { line: 2, .. }), "{msg}");
        assert!(msg.contains("labs.ndjson:2") && msg.contains("P404"), "{msg}");
    }
}
