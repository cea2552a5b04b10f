//! Report assembly and file emission.
//!
//! Files written for scenario `name` into the output directory:
//!
//! | file | content |
//! |------|---------|
//! | `{name}_{table}.csv` | one per metric table, header row then data rows |
//! | `{name}_checks.csv` | `check,passed,value,threshold,detail` |
//! | `{name}_report.txt` | seed, config echo, checks, tables |
//! | `{name}_{artifact}` | optional raw exports such as densities |
//!
//! Floats are written with 17 significant digits. Wall-clock timings are kept
//! in memory and printed to stderr by the CLI; they never reach the files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::quadrature::fmt17;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt17(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Panics if the row width does not match the header.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.columns)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(Cell::render))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Read a table written by [`Table::write_csv`]. Cells that parse as
    /// integers become `Int`, other numbers `Num`, the rest `Text`.
    pub fn read_csv<R: std::io::Read>(name: &str, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let columns = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            rows.push(
                rec.iter()
                    .map(|s| {
                        if let Ok(i) = s.parse::<i64>() {
                            Cell::Int(i)
                        } else if let Ok(v) = s.parse::<f64>() {
                            Cell::Num(v)
                        } else {
                            Cell::Text(s.to_string())
                        }
                    })
                    .collect(),
            );
        }
        Ok(Table {
            name: name.to_string(),
            columns,
            rows,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value <= threshold,
            value,
            threshold,
            detail: format!("value <= {}", fmt17(threshold)),
        }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            passed: value >= threshold,
            value,
            threshold,
            detail: format!("value >= {}", fmt17(threshold)),
        }
    }

    pub fn flag(name: &str, passed: bool, detail: &str) -> Self {
        Check {
            name: name.to_string(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            threshold: 1.0,
            detail: detail.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub scenario: String,
    pub config_echo: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub timings: Vec<(String, Duration)>,
    /// Extra files `(name, bytes)` written verbatim next to the tables.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl ExperimentReport {
    pub fn new(scenario: &str, config_echo: String, seed: u64) -> Self {
        ExperimentReport {
            scenario: scenario.to_string(),
            config_echo,
            seed,
            tables: Vec::new(),
            checks: Vec::new(),
            timings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Run `f`, recording its wall-clock time under `label`.
    pub fn timed<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timings.push((label.to_string(), start.elapsed()));
        out
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "passed", "value", "threshold", "detail"]);
        for c in &self.checks {
            t.push(vec![
                c.name.as_str().into(),
                c.passed.into(),
                c.value.into(),
                c.threshold.into(),
                c.detail.as_str().into(),
            ]);
        }
        t
    }

    /// Structured text: seed, config echo, checks and every table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}", self.scenario);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        let _ = writeln!(s, "\n--- config ---");
        s.push_str(&self.config_echo);
        let _ = writeln!(s, "\n--- checks ---");
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{} {} value={} ({})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                fmt17(c.value),
                c.detail
            );
        }
        for t in &self.tables {
            let _ = writeln!(s, "\n--- table {} ---", t.name);
            let _ = writeln!(s, "{}", t.columns.join("\t"));
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(Cell::render).collect();
                let _ = writeln!(s, "{}", cells.join("\t"));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Text,
}

/// Write the report files into `dir` (created if needed) and return their paths.
pub fn emit_report(report: &ExperimentReport, dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let prefix = report.scenario.replace('-', "_");
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Csv) {
        let mut tables = report.tables.clone();
        tables.push(report.checks_table());
        for t in &tables {
            if t.name.is_empty() || t.name.contains(['/', '\\']) {
                return Err(Error::InvalidArgument(format!("bad table name '{}'", t.name)));
            }
            let path = dir.join(format!("{prefix}_{}.csv", t.name));
            t.write_csv(fs::File::create(&path)?)?;
            written.push(path);
        }
    }
    for (name, bytes) in &report.artifacts {
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::InvalidArgument(format!("bad artifact name '{name}'")));
        }
        let path = dir.join(format!("{prefix}_{name}"));
        fs::write(&path, bytes)?;
        written.push(path);
    }
    if formats.contains(&ReportFormat::Text) {
        let path = dir.join(format!("{prefix}_report.txt"));
        fs::write(&path, report.to_text())?;
        written.push(path);
    }
    Ok(written)
}
