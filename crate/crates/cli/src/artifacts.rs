//! Artifact writers and readers: CSV tables with an embedded configuration
//! header, JSON documents with an embedded configuration object, and the
//! records reader used to refit archived runs.
//!
//! Two rules keep artifacts reproducible and self-describing. First, every
//! file starts with (or contains) the *effective* configuration and a schema
//! version, so a result can be interpreted without the command line that
//! produced it. Second, all floating-point values are written with 17
//! significant digits, which is enough to reproduce the exact binary value
//! on read-back — reruns of the same configuration must produce
//! byte-identical files.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::config::RunConfig;
use crate::CliError;

/// Version tag embedded in every artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Renders a float with 17 significant digits (16 after the point in
/// scientific notation), the minimum that is always read back bit-exact.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// The configuration as a JSON object with the canonical flat keys.
pub fn config_json(cfg: &RunConfig) -> Value {
    let mut map = serde_json::Map::new();
    for (key, value) in cfg.echo_entries() {
        map.insert(key, value.to_json());
    }
    Value::Object(map)
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes a CSV table: schema + configuration as `#` comments, a header
/// row, then one row per record with every cell in [`format_float`] form.
pub fn write_csv(
    path: &Path,
    cfg: &RunConfig,
    columns: &[&str],
    rows: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut text = String::new();
    text.push_str(&format!("# schema_version = {SCHEMA_VERSION}\n"));
    for (key, value) in cfg.echo_entries() {
        text.push_str(&format!("# {key} = {value}\n"));
    }
    text.push_str(&columns.join(","));
    text.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), columns.len(), "row width matches header");
        let cells: Vec<String> = row.iter().map(|&v| format_float(v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| io_error(path, e))
}

/// Writes a JSON document after stamping `schema_version` and `config`
/// into the top-level object (the value must be an object).
pub fn write_json(path: &Path, cfg: &RunConfig, mut document: Value) -> Result<(), CliError> {
    let object = document
        .as_object_mut()
        .expect("artifact documents are objects");
    object.insert("schema_version".into(), serde_json::json!(SCHEMA_VERSION));
    object.insert("config".into(), config_json(cfg));
    let mut text = serde_json::to_string_pretty(&document).expect("serializable document");
    text.push('\n');
    let mut file = fs::File::create(path).map_err(|e| io_error(path, e))?;
    file.write_all(text.as_bytes())
        .map_err(|e| io_error(path, e))
}

/// A parsed records table: column names plus rows of floats.
#[derive(Debug)]
pub struct RecordsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl RecordsTable {
    /// Index of a named column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Reads a records CSV previously written by [`write_csv`] (or any file in
/// the same shape): `#` comments are skipped, the first remaining line is
/// the header, and every later line must parse as floats of matching width.
pub fn read_records_csv(path: &Path) -> Result<RecordsTable, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let mut columns: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match &columns {
            None => {
                columns = Some(line.split(',').map(|c| c.trim().to_string()).collect());
            }
            Some(names) => {
                let cells: Result<Vec<f64>, _> =
                    line.split(',').map(|c| c.trim().parse::<f64>()).collect();
                let cells = cells.map_err(|_| {
                    CliError::Input(format!(
                        "{}: line {} is not a row of numbers",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                if cells.len() != names.len() {
                    return Err(CliError::Input(format!(
                        "{}: line {} has {} cells but the header names {}",
                        path.display(),
                        lineno + 1,
                        cells.len(),
                        names.len()
                    )));
                }
                rows.push(cells);
            }
        }
    }
    let columns = columns.ok_or_else(|| {
        CliError::Input(format!("{}: no header row found", path.display()))
    })?;
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no data rows found",
            path.display()
        )));
    }
    Ok(RecordsTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_roundtrips_awkward_values() {
        for &v in &[
            0.0,
            1.0,
            -1.0 / 3.0,
            6.117_752_218_843_85e-7,
            1.0 + f64::EPSILON,
            f64::MIN_POSITIVE,
        ] {
            let text = format_float(v);
            let back: f64 = text.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "`{text}` must read back exactly");
        }
    }

    #[test]
    fn csv_roundtrips_through_the_reader() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let cfg = RunConfig::default();
        let rows = vec![vec![0.0, 1.5], vec![0.25, -2.0 / 3.0]];
        write_csv(&path, &cfg, &["x", "value"], &rows).unwrap();
        let table = read_records_csv(&path).unwrap();
        assert_eq!(table.columns, vec!["x", "value"]);
        assert_eq!(table.rows.len(), 2, "comment lines are not data");
        for (got, want) in table.rows.iter().flatten().zip(rows.iter().flatten()) {
            assert_eq!(got.to_bits(), want.to_bits(), "cells roundtrip bit-exact");
        }
    }

    #[test]
    fn json_documents_carry_schema_and_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        let cfg = RunConfig::default();
        write_json(&path, &cfg, serde_json::json!({ "answer": 42 })).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["schema_version"], 1);
        assert_eq!(doc["answer"], 42);
        assert_eq!(
            doc["config"]["march.dx"],
            serde_json::json!(0.01),
            "config echo must be embedded"
        );
    }

    #[test]
    fn reader_rejects_malformed_tables() {
        let dir = tempfile::tempdir().unwrap();
        let ragged = dir.path().join("ragged.csv");
        fs::write(&ragged, "x,y\n1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(
            read_records_csv(&ragged),
            Err(CliError::Input(_))
        ));
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "# nothing\n").unwrap();
        assert!(matches!(read_records_csv(&empty), Err(CliError::Input(_))));
    }
}
