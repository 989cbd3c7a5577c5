//! Check records, plot tables and their on-disk forms.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// JSON numbers cannot hold `inf` or `NaN`; those travel as strings.
mod real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How a measured value is held against its threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// pass iff `value ≤ threshold`
    AtMost,
    /// pass iff `value ≥ threshold`
    AtLeast,
    /// recorded for context, always passes
    Info,
}

/// One measured quantity with its verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: String,
    pub name: String,
    #[serde(with = "real")]
    pub value: f64,
    #[serde(with = "real")]
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
    /// The mathematical statement under test, or "plumbing".
    pub anchor: String,
    /// Space, operator and scale grid the value was measured on.
    pub grid: String,
    /// Hypothesis warnings raised along the way.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl CheckRecord {
    pub fn new(
        suite: &str,
        name: impl Into<String>,
        value: f64,
        threshold: f64,
        comparison: Comparison,
        anchor: &str,
    ) -> CheckRecord {
        let pass = match comparison {
            Comparison::AtMost => value <= threshold,
            Comparison::AtLeast => value >= threshold,
            Comparison::Info => true,
        };
        CheckRecord {
            suite: suite.to_string(),
            name: name.into(),
            value,
            threshold,
            comparison,
            pass,
            anchor: anchor.to_string(),
            grid: String::new(),
            flags: Vec::new(),
        }
    }

    pub fn on(mut self, grid: impl Into<String>) -> CheckRecord {
        self.grid = grid.into();
        self
    }

    pub fn flagged(mut self, flags: &[String]) -> CheckRecord {
        self.flags.extend_from_slice(flags);
        self
    }

    /// One line for terminal summaries.
    pub fn summary(&self) -> String {
        let op = match self.comparison {
            Comparison::AtMost => "<=",
            Comparison::AtLeast => ">=",
            Comparison::Info => "~",
        };
        let verdict = if self.pass { "pass" } else { "FAIL" };
        format!(
            "{verdict} {}/{}: {:.6e} {op} {:.3e}",
            self.suite, self.name, self.value, self.threshold
        )
    }
}

/// A rectangular table of reals destined for one CSV file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Table {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Table::to_csv`].
    pub fn from_csv(name: impl Into<String>, text: &str) -> Result<Table> {
        let name = name.into();
        let mut lines = text.lines();
        let head = lines
            .next()
            .ok_or_else(|| Error::Config(format!("table {name}: empty file")))?;
        let columns: Vec<String> = head.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            let row = l
                .split(',')
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Config(format!("table {name} row {}: {e}", i + 1)))?;
            if row.len() != columns.len() {
                return Err(Error::Config(format!("table {name} row {}: wrong width", i + 1)));
            }
            rows.push(row);
        }
        Ok(Table { name, columns, rows })
    }

    /// Counts of `values` in `bins` equal-width bins over their range.
    pub fn histogram(name: impl Into<String>, values: &[f64], bins: usize) -> Table {
        let mut t = Table::new(name, &["lower", "upper", "count"]);
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() || bins == 0 {
            return t;
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for v in finite {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        for (k, c) in counts.into_iter().enumerate() {
            t.push(vec![lo + k as f64 * width, lo + (k + 1) as f64 * width, c as f64]);
        }
        t
    }
}

/// Origin of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub quick: bool,
    pub version: String,
    pub format: u32,
}

/// Everything one suite run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub suite: String,
    pub provenance: Provenance,
    pub records: Vec<CheckRecord>,
    pub tables: Vec<Table>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header { suite: String, provenance: Provenance },
    Check(CheckRecord),
    Summary { checks: usize, failed: usize, pass: bool },
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&CheckRecord> {
        self.records.iter().filter(|r| !r.pass).collect()
    }

    pub fn record(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// The JSON-lines report: a header, one line per check, a summary.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        let mut push = |l: &Line| {
            s.push_str(&serde_json::to_string(l).expect("report lines serialize"));
            s.push('\n');
        };
        push(&Line::Header {
            suite: self.suite.clone(),
            provenance: self.provenance.clone(),
        });
        for r in &self.records {
            push(&Line::Check(r.clone()));
        }
        push(&Line::Summary {
            checks: self.records.len(),
            failed: self.failures().len(),
            pass: self.passed(),
        });
        s
    }

    /// Header and checks of a JSON-lines report; tables are not restored.
    pub fn from_jsonl(text: &str) -> Result<ExperimentReport> {
        let mut head = None;
        let mut records = Vec::new();
        for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            match serde_json::from_str::<Line>(l).map_err(|e| Error::Config(format!("report line {}: {e}", i + 1)))? {
                Line::Header { suite, provenance } => head = Some((suite, provenance)),
                Line::Check(r) => records.push(r),
                Line::Summary { .. } => {}
            }
        }
        let (suite, provenance) = head.ok_or_else(|| Error::Config("report has no header line".into()))?;
        Ok(ExperimentReport {
            suite,
            provenance,
            records,
            tables: Vec::new(),
        })
    }

    /// Report and every table, concatenated; equal bytes mean equal runs.
    pub fn fingerprint(&self) -> String {
        let mut s = self.to_jsonl();
        for t in &self.tables {
            let _ = writeln!(s, "# {}", t.name);
            s.push_str(&t.to_csv());
        }
        s
    }
}

/// One CSV file listed in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub table: String,
    pub columns: Vec<String>,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub suite: String,
    pub files: Vec<ManifestEntry>,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes one CSV per table and `manifest.json` into `dir`.
pub fn emit_plot_data(report: &ExperimentReport, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    for t in &report.tables {
        let file = format!("{}.csv", file_stem(&t.name));
        let csv = t.to_csv();
        std::fs::write(dir.join(&file), &csv)?;
        files.push(ManifestEntry {
            file,
            table: t.name.clone(),
            columns: t.columns.clone(),
            rows: t.rows.len(),
            sha256: Sha256::digest(csv.as_bytes())
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect(),
        });
    }
    let manifest = Manifest {
        suite: report.suite.clone(),
        files,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

/// Writes `report.jsonl` plus the plot data.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.jsonl"), report.to_jsonl())?;
    emit_plot_data(report, dir)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Reads `report.jsonl` and, when a manifest is present, the tables it lists.
pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::from_jsonl(&read(&dir.join("report.jsonl"))?)?;
    let mpath = dir.join("manifest.json");
    if mpath.exists() {
        let manifest: Manifest = serde_json::from_str(&read(&mpath)?)?;
        for e in manifest.files {
            let csv = read(&dir.join(&e.file))?;
            let digest: String = Sha256::digest(csv.as_bytes())
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            if digest != e.sha256 {
                return Err(Error::Config(format!("{}: digest differs from the manifest", e.file)));
            }
            report.tables.push(Table::from_csv(e.table, &csv)?);
        }
    }
    Ok(report)
}
