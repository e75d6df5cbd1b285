use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::coeff_ring::CoeffFn;
use crate::weyl_algebra::WeylSection;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

/// One reported quantity: a human-readable rendering plus exact data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Item {
    pub key: String,
    pub text: String,
    pub data: Value,
}

/// Command output. Items keep insertion order, so rendering is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub passed: bool,
    pub warnings: Vec<String>,
    pub items: Vec<Item>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report { command: command.to_string(), passed: true, warnings: Vec::new(), items: Vec::new() }
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    /// Records a check; a failing check marks the whole report failed.
    pub fn check(&mut self, key: &str, ok: bool, detail: impl Serialize) {
        self.passed &= ok;
        let text = if ok { "ok".to_string() } else { "FAILED".to_string() };
        self.items.push(Item { key: key.to_string(), text, data: json!({ "passed": ok, "detail": detail }) });
    }

    pub fn value(&mut self, key: &str, text: impl Into<String>, data: impl Serialize) {
        let data = serde_json::to_value(data).unwrap_or(Value::Null);
        self.items.push(Item { key: key.to_string(), text: text.into(), data });
    }

    pub fn function(&mut self, key: &str, f: &CoeffFn) {
        self.value(key, f.to_string(), f.to_records());
    }

    pub fn series(&mut self, key: &str, series: &[CoeffFn]) {
        let text = series_text(series);
        let data: Vec<_> = series.iter().map(CoeffFn::to_records).collect();
        self.value(key, text, data);
    }

    pub fn section(&mut self, key: &str, a: &WeylSection) {
        self.value(key, a.to_string(), a.to_records());
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
            OutputFormat::Text => {
                let mut s = String::new();
                let _ = writeln!(s, "{}: {}", self.command, if self.passed { "PASS" } else { "FAIL" });
                for w in &self.warnings {
                    let _ = writeln!(s, "warning: {w}");
                }
                for item in &self.items {
                    let _ = writeln!(s, "{}: {}", item.key, item.text);
                }
                s
            }
        }
    }
}

/// `Q_0 + ℏ Q_1 + …` with zero orders omitted.
pub(crate) fn series_text(series: &[CoeffFn]) -> String {
    let parts: Vec<String> = series
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(l, c)| match l {
            0 => format!("({c})"),
            1 => format!("ℏ·({c})"),
            _ => format!("ℏ^{l}·({c})"),
        })
        .collect();
    if parts.is_empty() {
        "0".to_string()
    } else {
        parts.join(" + ")
    }
}
