//! Machine-readable run reports.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::nicety::PartResult;

pub const REPORT_SCHEMA: &str = "towerlab.report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Informational checks are reported but never fail a run.
    pub required: bool,
    pub checked: u64,
    pub witnesses: Vec<String>,
}

impl Check {
    pub fn from_part(name: &str, part: &PartResult) -> Self {
        Check {
            name: name.to_string(),
            pass: part.pass,
            required: true,
            checked: part.checked,
            witnesses: part.witnesses.clone(),
        }
    }

    pub fn boolean(name: &str, pass: bool, checked: u64, witnesses: Vec<String>) -> Self {
        Check {
            name: name.to_string(),
            pass,
            required: true,
            checked,
            witnesses,
        }
    }

    pub fn info(mut self) -> Self {
        self.required = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub command: String,
    pub config: Value,
    pub checks: Vec<Check>,
    /// Names of failed required checks.
    pub failures: Vec<String>,
    /// Items a budget left open.
    pub undecided: Vec<String>,
    pub budgets: BTreeMap<String, u64>,
    pub data: Value,
}

impl Report {
    pub fn new(command: &str, config: Value) -> Self {
        Report {
            schema: REPORT_SCHEMA.to_string(),
            command: command.to_string(),
            config,
            checks: Vec::new(),
            failures: Vec::new(),
            undecided: Vec::new(),
            budgets: BTreeMap::new(),
            data: Value::Null,
        }
    }

    pub fn push(&mut self, check: Check) {
        if check.required && !check.pass {
            self.failures.push(check.name.clone());
        }
        self.checks.push(check);
    }

    pub fn budget(&mut self, name: &str, value: u64) {
        self.budgets.insert(name.to_string(), value);
    }

    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json())
    }

    /// One line per check, failures first.
    pub fn summary(&self) -> String {
        let mut out = format!(
            "{}: {}\n",
            self.command,
            if self.pass() { "pass" } else { "FAIL" }
        );
        let mut checks: Vec<&Check> = self.checks.iter().collect();
        checks.sort_by_key(|c| c.pass);
        for c in checks {
            let tag = match (c.pass, c.required) {
                (true, _) => "ok  ",
                (false, true) => "FAIL",
                (false, false) => "note",
            };
            out.push_str(&format!("  {tag} {} ({} checked)", c.name, c.checked));
            if let Some(w) = c.witnesses.first() {
                out.push_str(&format!(": {w}"));
            }
            out.push('\n');
        }
        if !self.undecided.is_empty() {
            out.push_str(&format!("  {} undecided\n", self.undecided.len()));
        }
        out
    }
}
