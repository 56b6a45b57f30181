use std::path::{Path, PathBuf};

use gradcodec::tensorio::write_atomic;
use serde_json::{Map, Value};

use crate::Failure;

pub const SCHEMA_PREFIX: &str = "gradcodec";

/// Where the JSON report goes and whether the human summary is shown.
pub struct Sink {
    pub report: Option<PathBuf>,
    pub json_only: bool,
}

impl Sink {
    /// Prints the summary, then writes the report to `--report` or, failing
    /// that, prints it compactly as the last stdout line.
    pub fn emit(&self, command: &str, summary: &str, body: Value) -> Result<(), Failure> {
        let report = with_schema(command, body);
        if !self.json_only && !summary.is_empty() {
            print!("{summary}");
            if !summary.ends_with('\n') {
                println!();
            }
        }
        match &self.report {
            Some(path) => {
                let mut text = serde_json::to_string_pretty(&report).map_err(json_err)?;
                text.push('\n');
                write_file(path, text.as_bytes())
            }
            None => {
                println!("{}", serde_json::to_string(&report).map_err(json_err)?);
                Ok(())
            }
        }
    }
}

fn with_schema(command: &str, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("schema".into(), Value::String(format!("{SCHEMA_PREFIX}.{command}/1")));
    match body {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    Value::Object(map)
}

pub fn json_err(e: serde_json::Error) -> Failure {
    Failure::Domain(format!("cannot serialize report: {e}"))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    write_atomic(path, bytes).map_err(Failure::from)
}
