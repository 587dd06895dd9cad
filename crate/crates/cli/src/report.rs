//! Report envelope shared by every subcommand.

use std::path::Path;

use nalgebra::DMatrix;
use netident::model::{EntryDoc, TransferMatrix};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

/// Top-level report. Keys serialize in declaration order.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub tool: Tool,
    pub command: String,
    pub inputs: Vec<InputFile>,
    pub config: Value,
    pub passed: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub result: Value,
}

impl Report {
    pub fn new(command: &str, inputs: Vec<InputFile>, config: Value) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            tool: Tool {
                name: "netident",
                version: env!("CARGO_PKG_VERSION"),
            },
            command: command.to_string(),
            inputs,
            config,
            passed: true,
            warnings: Vec::new(),
            result: Value::Null,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// `key: value` lines of the flattened result, for terminal reading.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} | {} | {}\n",
            self.tool.name,
            self.tool.version,
            self.command,
            if self.passed { "passed" } else { "FAILED" }
        );
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        flatten("", &self.result, &mut out);
        out
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) if xs.iter().any(|x| x.is_object()) => {
            for (n, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{n}]"), x, out);
            }
        }
        other => out.push_str(&format!("{prefix}: {other}\n")),
    }
}

/// Read a file and record its hash.
pub fn read_input(role: &str, path: &Path) -> Result<(String, InputFile), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
    Ok((
        text,
        InputFile {
            role: role.to_string(),
            path: path.display().to_string(),
            sha256,
        },
    ))
}

/// Nonzero entries of a transfer matrix with one-based `to`/`from` labels.
pub fn entries(m: &TransferMatrix, rows: &[usize], cols: &[usize]) -> Vec<EntryDoc> {
    let mut v = Vec::new();
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            let t = m.get(r, c);
            if !t.is_zero() {
                v.push(EntryDoc {
                    from: cols[c] + 1,
                    to: rows[r] + 1,
                    num: t.num().to_vec(),
                    den: t.den().to_vec(),
                });
            }
        }
    }
    v
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

pub fn one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|k| k + 1).collect()
}
