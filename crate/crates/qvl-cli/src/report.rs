//! Suite reports, the failure manifest and report merging.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use qvl_core::grid::{DomainSpec, GridDomain};

use crate::scenario::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "holds")]
    Holds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub relation: Relation,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Assertion {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Assertion { name: name.into(), value: Some(value), limit: Some(limit), relation: Relation::AtMost, pass: value <= limit, message: None }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Assertion { name: name.into(), value: Some(value), limit: Some(limit), relation: Relation::AtLeast, pass: value >= limit, message: None }
    }

    pub fn holds(name: &str, pass: bool) -> Self {
        Assertion { name: name.into(), value: None, limit: None, relation: Relation::Holds, pass, message: None }
    }

    pub fn error(name: &str, message: String) -> Self {
        Assertion { name: name.into(), value: None, limit: None, relation: Relation::Holds, pass: false, message: Some(message) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub spec: DomainSpec,
    pub h: f64,
    pub nodes: usize,
}

impl GridInfo {
    pub fn of(d: &GridDomain) -> Self {
        GridInfo { spec: d.spec().clone(), h: d.h(), nodes: d.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub suite: String,
    pub seed: Option<u64>,
    pub grid: Option<GridInfo>,
    pub tolerances: Tolerances,
    pub pass: bool,
    pub assertions: Vec<Assertion>,
    pub data: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub suite: String,
    pub assertion: Assertion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub scenario_hash: String,
    pub pass: bool,
    pub suites: Vec<(String, bool)>,
    pub failures: Vec<Failure>,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merged {
    pub pass: bool,
    pub reports: Vec<SuiteReport>,
}

/// Collects every suite report under `dir`, ordered by file name.
pub fn merge(dir: &Path) -> Result<Merged, String> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .map_err(|e| format!("cannot read {}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    names.sort();
    let mut reports = Vec::new();
    for p in names {
        let text = fs::read_to_string(&p).map_err(|e| format!("cannot read {}: {e}", p.display()))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?;
        if v.get("suite").is_some() {
            reports.push(serde_json::from_value(v).map_err(|e| format!("{}: {e}", p.display()))?);
        }
    }
    if reports.is_empty() {
        return Err(format!("no suite reports in {}", dir.display()));
    }
    Ok(Merged { pass: reports.iter().all(|r: &SuiteReport| r.pass), reports })
}
