//! Checks exported files against the schemas in the repository's
//! `schema/` directory.

use serde_json::Value;

use crate::error::{Error, Result};

pub const SNAPSHOT_SCHEMA: &str = include_str!("../../../schema/snapshot.schema.json");
pub const TRAINING_LOG_SCHEMA: &str = include_str!("../../../schema/training_log.schema.json");
pub const STABILITY_REPORT_SCHEMA: &str = include_str!("../../../schema/stability_report.schema.json");
pub const CSV_SCHEMA: &str = include_str!("../../../schema/csv.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonKind {
    Snapshot,
    TrainingLogLine,
    StabilityReport,
}

fn schema_text(kind: JsonKind) -> &'static str {
    match kind {
        JsonKind::Snapshot => SNAPSHOT_SCHEMA,
        JsonKind::TrainingLogLine => TRAINING_LOG_SCHEMA,
        JsonKind::StabilityReport => STABILITY_REPORT_SCHEMA,
    }
}

/// Validates one JSON document.
pub fn check_json(kind: JsonKind, text: &str) -> Result<()> {
    let schema: Value = serde_json::from_str(schema_text(kind))?;
    let instance: Value = serde_json::from_str(text)?;
    let validator =
        jsonschema::validator_for(&schema).map_err(|e| Error::config(format!("bad schema {kind:?}: {e}")))?;
    let errors: Vec<String> = validator.iter_errors(&instance).map(|e| format!("{}: {e}", e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::config(format!("{kind:?} fails its schema: {}", errors.join("; "))))
    }
}

/// Validates a line-delimited training log.
pub fn check_training_log(text: &str) -> Result<()> {
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        check_json(JsonKind::TrainingLogLine, line).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
    }
    Ok(())
}

/// Splits one CSV record, honouring double-quoted fields.
pub fn split_csv_line(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

fn check_cell(ty: &str, cell: &str) -> std::result::Result<(), String> {
    let num = || cell.parse::<f64>().map_err(|_| format!("'{cell}' is not a number"));
    match ty {
        "string" => Ok(()),
        "integer" => cell.parse::<u64>().map(|_| ()).map_err(|_| format!("'{cell}' is not a non-negative integer")),
        "number" => num().and_then(|x| if x.is_finite() { Ok(()) } else { Err(format!("'{cell}' is not finite")) }),
        "nonnegative" => num().and_then(|x| if x >= 0.0 && x.is_finite() { Ok(()) } else { Err(format!("'{cell}' < 0")) }),
        "unit" => num().and_then(|x| if (-1.0..=1.0).contains(&x) { Ok(()) } else { Err(format!("'{cell}' outside [-1, 1]")) }),
        "ranking" => match cell {
            "beta" | "r_log" => Ok(()),
            _ => Err(format!("'{cell}' is not a ranking")),
        },
        other => Err(format!("unknown column type '{other}'")),
    }
}

fn check_block(lines: &[(usize, &str)], columns: &[Value]) -> Result<()> {
    let names: Vec<&str> = columns.iter().filter_map(|c| c[0].as_str()).collect();
    let types: Vec<&str> = columns.iter().filter_map(|c| c[1].as_str()).collect();
    let (hline, header) = lines.first().ok_or_else(|| Error::Parse { line: 1, msg: "missing header".into() })?;
    if split_csv_line(header) != names {
        return Err(Error::Parse { line: *hline, msg: format!("header must be '{}'", names.join(",")) });
    }
    for &(n, line) in &lines[1..] {
        let cells = split_csv_line(line);
        if cells.len() != names.len() {
            return Err(Error::Parse { line: n, msg: format!("expected {} fields, found {}", names.len(), cells.len()) });
        }
        for (c, (ty, name)) in cells.iter().zip(types.iter().zip(&names)) {
            check_cell(ty, c).map_err(|m| Error::Parse { line: n, msg: format!("{name}: {m}") })?;
        }
    }
    Ok(())
}

/// Validates an exported CSV: `kind` is one of the keys of
/// `schema/csv.schema.json`.
pub fn check_csv(kind: &str, text: &str) -> Result<()> {
    let schema: Value = serde_json::from_str(CSV_SCHEMA)?;
    let spec = schema.get(kind).ok_or_else(|| Error::config(format!("no CSV schema named '{kind}'")))?;
    let lines: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let columns = spec["columns"].as_array().expect("columns");
    match spec.get("summary").and_then(|s| s.as_array()) {
        None => check_block(&lines, columns),
        Some(summary) => {
            let blank = lines
                .iter()
                .position(|(_, l)| l.trim().is_empty())
                .ok_or_else(|| Error::Parse { line: lines.len(), msg: "missing summary block".into() })?;
            check_block(&lines[..blank], columns)?;
            check_block(&lines[blank + 1..], summary)
        }
    }
}
