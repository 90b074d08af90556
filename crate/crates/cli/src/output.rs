use std::io::Write;

use serde_json::{json, Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// What a command produced: a table for CSV, and the table plus `meta` for JSON.
pub struct Report {
    pub command: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub meta: Map<String, Value>,
}

impl Report {
    pub fn new(command: &'static str, columns: Vec<String>) -> Self {
        Self { command, columns, rows: Vec::new(), meta: Map::new() }
    }

    pub fn meta(mut self, key: &str, value: impl serde::Serialize) -> Self {
        self.meta.insert(key.into(), serde_json::to_value(value).expect("serializable"));
        self
    }

    pub fn write(&self, format: Format, out: &mut dyn Write) -> std::io::Result<()> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell))?;
                }
                w.flush()
            }
            Format::Json => {
                let mut doc = Map::new();
                doc.insert("schema_version".into(), json!(SCHEMA_VERSION));
                doc.insert("command".into(), json!(self.command));
                doc.extend(self.meta.clone());
                doc.insert("columns".into(), json!(self.columns));
                doc.insert("rows".into(), json!(self.rows));
                serde_json::to_writer_pretty(&mut *out, &Value::Object(doc))?;
                writeln!(out)
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

/// `prefix_1, .., prefix_n`.
pub fn names(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

pub fn nums(v: &[f64]) -> Vec<Value> {
    v.iter().map(|x| json!(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> Report {
        let mut r = Report::new("simulate", vec!["t".into(), "z_1".into()]).meta("steps", 1);
        r.rows.push(vec![json!(0.0), json!(0.5)]);
        r.rows.push(vec![json!(1.0), Value::Null]);
        r
    }

    #[test]
    fn csv_has_a_header_and_empty_cells_for_missing_values() {
        let mut out = Vec::new();
        report().write(Format::Csv, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "t,z_1\n0.0,0.5\n1.0,\n");
    }

    #[test]
    fn json_is_versioned() {
        let mut out = Vec::new();
        report().write(Format::Json, &mut out).unwrap();
        let v: Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["schema_version"], json!(SCHEMA_VERSION));
        assert_eq!(v["command"], json!("simulate"));
        assert_eq!(v["steps"], json!(1));
        assert_eq!(v["rows"][1][1], Value::Null);
    }
}
