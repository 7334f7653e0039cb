//! Suite results and their serialisations, plus the per-sample CSV dump.
//!
//! JSON reports follow `fbstab-report/1`; field order is the struct order and
//! checks are sorted, so equal inputs give byte-identical documents.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Basis, SuiteName};
use crate::variation::SampleTraces;

pub const REPORT_SCHEMA: &str = "fbstab-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    Interior,
    Boundary,
    /// A point of the ambient domain (curvature or convexity sampling).
    Ambient,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Interior => "interior",
            Self::Boundary => "boundary",
            Self::Ambient => "ambient",
        }
    }
}

/// The sample or point responsible for a check's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRef {
    pub region: Region,
    pub index: Option<usize>,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub scenario: String,
    pub suite: SuiteName,
    pub check: String,
    pub pass: bool,
    pub value: Option<f64>,
    pub expected: Option<f64>,
    pub tolerance: Option<f64>,
    pub basis: Option<Basis>,
    pub worst: Option<SampleRef>,
    pub detail: String,
}

impl Check {
    pub fn new(scenario: &str, suite: SuiteName, check: impl Into<String>) -> Self {
        Self {
            scenario: scenario.to_string(),
            suite,
            check: check.into(),
            pass: false,
            value: None,
            expected: None,
            tolerance: None,
            basis: None,
            worst: None,
            detail: String::new(),
        }
    }

    /// A check that could not be evaluated.
    pub fn error(scenario: &str, suite: SuiteName, check: impl Into<String>, err: &Error) -> Self {
        Self { detail: format!("error: {err}"), ..Self::new(scenario, suite, check) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub checks: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub schema: String,
    pub seed: u64,
    pub suites: Vec<SuiteName>,
    pub scenarios: usize,
    pub totals: Totals,
    pub checks: Vec<Check>,
}

impl SuiteResult {
    /// Sorts the checks by scenario, then suite; the order within a suite is kept.
    pub fn new(seed: u64, mut suites: Vec<SuiteName>, mut checks: Vec<Check>) -> Self {
        suites.sort();
        suites.dedup();
        checks.sort_by(|a, b| (&a.scenario, a.suite).cmp(&(&b.scenario, b.suite)));
        let mut scenarios: Vec<&str> = checks.iter().map(|c| c.scenario.as_str()).collect();
        scenarios.dedup();
        let passed = checks.iter().filter(|c| c.pass).count();
        Self {
            schema: REPORT_SCHEMA.into(),
            seed,
            suites,
            scenarios: scenarios.len(),
            totals: Totals { checks: checks.len(), passed, failed: checks.len() - passed },
            checks,
        }
    }

    pub fn all_pass(&self) -> bool {
        self.totals.failed == 0
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Text,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
            Self::Text => "txt",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "text" => Ok(Self::Text),
            _ => Err(Error::Config(format!("unknown format {s:?}; expected json, csv or text"))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn joined(point: &[f64]) -> String {
    point.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

pub fn emit_report(result: &SuiteResult, format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut out = serde_json::to_vec_pretty(result)?;
            out.push(b'\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "scenario",
                "suite",
                "check",
                "pass",
                "value",
                "expected",
                "tolerance",
                "basis",
                "region",
                "index",
                "point",
                "detail",
            ])?;
            for c in &result.checks {
                let basis =
                    c.basis.map(|b| serde_json::to_value(b).map(|v| v.as_str().unwrap_or_default().to_string()));
                let basis = basis.transpose()?.unwrap_or_default();
                let (region, index, point) = match &c.worst {
                    Some(s) => (
                        s.region.as_str().to_string(),
                        s.index.map(|i| i.to_string()).unwrap_or_default(),
                        joined(&s.point),
                    ),
                    None => Default::default(),
                };
                w.write_record([
                    c.scenario.as_str(),
                    c.suite.as_str(),
                    c.check.as_str(),
                    if c.pass { "true" } else { "false" },
                    &opt(c.value),
                    &opt(c.expected),
                    &opt(c.tolerance),
                    &basis,
                    &region,
                    &index,
                    &point,
                    c.detail.as_str(),
                ])?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))
        }
        Format::Text => {
            let mut out = String::new();
            for c in &result.checks {
                let _ = write!(
                    out,
                    "{} {} {}/{}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.scenario,
                    c.suite.as_str(),
                    c.check
                );
                if let Some(v) = c.value {
                    let _ = write!(out, " value={v:e}");
                }
                if let Some(v) = c.expected {
                    let _ = write!(out, " expected={v:e}");
                }
                if let Some(v) = c.tolerance {
                    let _ = write!(out, " tol={v:e}");
                }
                if let Some(s) = &c.worst {
                    let _ = write!(out, " at {}", s.region.as_str());
                    if let Some(i) = s.index {
                        let _ = write!(out, "#{i}");
                    }
                    let _ = write!(out, " [{}]", joined(&s.point));
                }
                if !c.detail.is_empty() {
                    let _ = write!(out, " ({})", c.detail);
                }
                out.push('\n');
            }
            let t = result.totals;
            let _ = writeln!(
                out,
                "{} checks over {} scenarios: {} passed, {} failed",
                t.checks, result.scenarios, t.passed, t.failed
            );
            Ok(out.into_bytes())
        }
    }
}

/// Columns of the per-sample dump after `region, index, x0 … x{n-1}`.
pub const DUMP_COLUMNS: [&str; 7] = [
    "trace_s_euclid",
    "trace_s_tilde",
    "trace_s_tilde_residual",
    "minimality",
    "trace_t_euclid",
    "trace_t_tilde",
    "trace_t_tilde_residual",
];

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub region: Region,
    pub index: usize,
    pub point: Vec<f64>,
    /// One entry per `DUMP_COLUMNS`; `None` where the column does not apply.
    pub values: Vec<Option<f64>>,
}

pub fn dump_rows(t: &SampleTraces) -> Vec<DumpRow> {
    let mut rows = Vec::with_capacity(t.interior_points.len() + t.boundary_points.len());
    for (i, p) in t.interior_points.iter().enumerate() {
        rows.push(DumpRow {
            region: Region::Interior,
            index: i,
            point: p.clone(),
            values: vec![
                Some(t.trace_s_euclid[i]),
                Some(t.trace_s_tilde[i]),
                Some(t.trace_s_tilde_residual[i]),
                Some(t.minimality[i]),
                None,
                None,
                None,
            ],
        });
    }
    for (i, p) in t.boundary_points.iter().enumerate() {
        rows.push(DumpRow {
            region: Region::Boundary,
            index: i,
            point: p.clone(),
            values: vec![
                None,
                None,
                None,
                None,
                Some(t.trace_t_euclid[i]),
                Some(t.trace_t_tilde[i]),
                Some(t.trace_t_tilde_residual[i]),
            ],
        });
    }
    rows
}

pub fn write_dump(rows: &[DumpRow], n: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["region".to_string(), "index".to_string()];
    header.extend((0..n).map(|j| format!("x{j}")));
    header.extend(DUMP_COLUMNS.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for r in rows {
        if r.point.len() != n || r.values.len() != DUMP_COLUMNS.len() {
            return Err(Error::Dimension(format!("dump row {} {} has the wrong width", r.region.as_str(), r.index)));
        }
        let mut rec = vec![r.region.as_str().to_string(), r.index.to_string()];
        rec.extend(r.point.iter().map(f64::to_string));
        rec.extend(r.values.iter().map(|v| opt(*v)));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Inverse of `write_dump`: returns the ambient dimension and the rows.
pub fn parse_dump(bytes: &[u8]) -> Result<(usize, Vec<DumpRow>)> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    let width = header.len();
    if width < 2 + DUMP_COLUMNS.len() || &header[0] != "region" || &header[1] != "index" {
        return Err(Error::Config("not a per-sample dump".into()));
    }
    let n = width - 2 - DUMP_COLUMNS.len();
    let bad = |what: &str| Error::Config(format!("dump: bad {what}"));
    let number = |s: &str| s.parse::<f64>().map_err(|_| bad("number"));
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let region = match &rec[0] {
            "interior" => Region::Interior,
            "boundary" => Region::Boundary,
            _ => return Err(bad("region")),
        };
        let index = rec[1].parse().map_err(|_| bad("index"))?;
        let point = (0..n).map(|j| number(&rec[2 + j])).collect::<Result<_>>()?;
        let values = (0..DUMP_COLUMNS.len())
            .map(|j| {
                let s = &rec[2 + n + j];
                if s.is_empty() {
                    Ok(None)
                } else {
                    number(s).map(Some)
                }
            })
            .collect::<Result<_>>()?;
        rows.push(DumpRow { region, index, point, values });
    }
    Ok((n, rows))
}
