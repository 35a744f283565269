//! Run reports, per-metric CSV tables and merging of finished runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Experiment;
use crate::error::{Error, Result};
use crate::measures::Estimate;

/// Version of the `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.json";

/// One reported number with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    /// `None` when the value is not finite.
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    /// Number of samples behind the value.
    pub n: u64,
    pub seed: u64,
    /// Extra coordinates such as `t_n` or `eta`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "==")]
    Equal,
}

impl Relation {
    fn symbol(&self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Equal => "==",
        }
    }

    fn holds(&self, observed: f64, bound: f64) -> bool {
        match self {
            Relation::AtMost => observed <= bound,
            Relation::AtLeast => observed >= bound,
            Relation::Equal => observed == bound,
        }
    }
}

/// A pass/fail comparison against a declared acceptance band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub observed: Option<f64>,
    pub relation: Relation,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, observed: f64, relation: Relation, bound: f64) -> Self {
        let passed = !observed.is_nan() && relation.holds(observed, bound);
        Self {
            name: name.into(),
            observed: finite(observed),
            relation,
            bound,
            passed,
        }
    }

    pub fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::new(name, observed, Relation::AtMost, bound)
    }

    pub fn at_least(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::new(name, observed, Relation::AtLeast, bound)
    }

    pub fn equal(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self::new(name, observed, Relation::Equal, bound)
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self::equal(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Wall-clock and scheduling data; kept out of the summary so that it stays
/// a pure function of `(config, seed)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_s: f64,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub id: String,
    pub experiment: Experiment,
    pub seed: u64,
    /// Echo of the validated parameters.
    pub config: serde_json::Value,
    pub metrics: Vec<Metric>,
    pub checks: Vec<Check>,
    pub passed: bool,
    #[serde(skip)]
    pub timing: Timing,
}

impl RunReport {
    pub fn new(id: &str, experiment: Experiment, seed: u64, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: id.to_string(),
            experiment,
            seed,
            config,
            metrics: Vec::new(),
            checks: Vec::new(),
            passed: true,
            timing: Timing::default(),
        }
    }

    pub fn metric(&mut self, name: &str, value: f64, n: usize) -> &mut Metric {
        self.metrics.push(Metric {
            name: name.to_string(),
            value: finite(value),
            stderr: None,
            n: n as u64,
            seed: self.seed,
            labels: BTreeMap::new(),
        });
        self.metrics.last_mut().expect("just pushed")
    }

    pub fn estimate(&mut self, name: &str, e: &Estimate) -> &mut Metric {
        let m = self.metric(name, e.value, e.n);
        m.stderr = finite(e.stderr);
        m
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    /// Canonical JSON text of the summary.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch {
                found: v.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }
}

impl Metric {
    pub fn label(&mut self, key: &str, value: f64) -> &mut Self {
        self.labels.insert(key.to_string(), value);
        self
    }
}

// ---------------------------------------------------------------------------
// Tables

/// A CSV cell.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    U(u64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}
impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}
impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}
impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}
impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}
impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}
impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(v) => write!(f, "{v}"),
            Cell::I(v) => write!(f, "{v}"),
            Cell::U(v) => write!(f, "{v}"),
            Cell::B(v) => write!(f, "{v}"),
            Cell::S(v) => f.write_str(v),
        }
    }
}

/// Rows of one metric; written as `<name>.csv` with leading columns
/// `experiment, seed, sample`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    pub fn write_csv<W: std::io::Write>(&self, experiment: &str, seed: u64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "experiment".to_string(),
            "seed".to_string(),
            "sample".to_string(),
        ];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (k, row) in self.rows.iter().enumerate() {
            let mut rec = vec![experiment.to_string(), seed.to_string(), k.to_string()];
            rec.extend(row.iter().map(|c| c.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A finished run: the report plus its tables.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub tables: Vec<Table>,
}

impl RunOutput {
    /// Write `summary.json`, `timing.json` and one CSV per table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SUMMARY_FILE), self.report.to_json()?)?;
        fs::write(
            dir.join(TIMING_FILE),
            serde_json::to_string_pretty(&self.report.timing)? + "\n",
        )?;
        for t in &self.tables {
            let f = fs::File::create(dir.join(format!("{}.csv", t.name)))?;
            t.write_csv(
                &self.report.id,
                self.report.seed,
                std::io::BufWriter::new(f),
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Merging

/// `max/min` of one family metric across all merged runs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyRow {
    pub metric: String,
    pub eta: f64,
    pub members: Vec<(f64, f64)>,
    pub max: f64,
    pub min: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MergedReport {
    pub runs: Vec<RunReport>,
    pub families: Vec<FamilyRow>,
}

/// Metric name whose values across `t_n` form a family per `eta`.
pub const FAMILY_METRIC: &str = "folner_exp_mass";

fn read_report(path: &Path) -> Result<RunReport> {
    let file: PathBuf = if path.is_dir() {
        path.join(SUMMARY_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file)?;
    RunReport::from_json(&text)
}

/// Load summaries (files or run directories) and merge them.
pub fn load_reports(paths: &[PathBuf]) -> Result<MergedReport> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument(
            "report needs at least one run".into(),
        ));
    }
    let runs = paths
        .iter()
        .map(|p| read_report(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(runs))
}

/// Recompute family statistics over all runs. Duplicate `(t_n, eta)`
/// members keep the first run's value.
pub fn merge(runs: Vec<RunReport>) -> MergedReport {
    let mut by_eta: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in &runs {
        for m in r.metrics.iter().filter(|m| m.name == FAMILY_METRIC) {
            let (Some(&t_n), Some(&eta), Some(v)) =
                (m.labels.get("t_n"), m.labels.get("eta"), m.value)
            else {
                continue;
            };
            by_eta
                .entry(eta.to_bits())
                .or_default()
                .entry(t_n.to_bits())
                .or_insert(v);
        }
    }
    let mut families = Vec::new();
    for (eta, members) in by_eta {
        let mut members: Vec<(f64, f64)> = members
            .into_iter()
            .map(|(t, v)| (f64::from_bits(t), v))
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0));
        let max = members
            .iter()
            .map(|m| m.1)
            .fold(f64::NEG_INFINITY, f64::max);
        let min = members.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
        families.push(FamilyRow {
            metric: FAMILY_METRIC.into(),
            eta: f64::from_bits(eta),
            members,
            max,
            min,
            ratio: max / min,
        });
    }
    MergedReport { runs, families }
}

fn fmt_num(v: Option<f64>) -> String {
    match v {
        None => "-".into(),
        Some(x) if x == x.trunc() && x.abs() < 1e12 => format!("{x}"),
        Some(x) if x.abs() < 1e-3 || x.abs() >= 1e12 => format!("{x:.3e}"),
        Some(x) => format!("{x:.6}"),
    }
}

impl MergedReport {
    pub fn passed(&self) -> bool {
        self.runs.iter().all(|r| r.passed)
    }

    /// Plain-text acceptance table.
    pub fn render(&self) -> String {
        let mut rows: Vec<[String; 6]> = Vec::new();
        for r in &self.runs {
            for c in &r.checks {
                rows.push([
                    r.id.clone(),
                    r.experiment.to_string(),
                    c.name.clone(),
                    fmt_num(c.observed),
                    format!("{} {}", c.relation.symbol(), fmt_num(Some(c.bound))),
                    if c.passed {
                        "PASS".into()
                    } else {
                        "FAIL".into()
                    },
                ]);
            }
        }
        let header = ["run", "experiment", "check", "observed", "band", "result"];
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header.map(String::from));
        line(&mut out, &widths.map(|w| "-".repeat(w)));
        for r in &rows {
            line(&mut out, r);
        }
        for f in &self.families {
            let members: Vec<String> = f
                .members
                .iter()
                .map(|(t, v)| format!("t_n={t}: {v:.6}"))
                .collect();
            let _ = writeln!(
                out,
                "\nfamily {} at eta={}: {}; max/min = {:.4}",
                f.metric,
                f.eta,
                members.join(", "),
                f.ratio
            );
        }
        let total = self.runs.iter().map(|r| r.checks.len()).sum::<usize>();
        let failed = self
            .runs
            .iter()
            .flat_map(|r| &r.checks)
            .filter(|c| !c.passed)
            .count();
        let _ = writeln!(
            out,
            "\n{} runs, {} checks, {} failed",
            self.runs.len(),
            total,
            failed
        );
        out
    }
}
