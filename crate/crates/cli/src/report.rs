use std::fmt::Write as _;

use serde::ser::{Serialize, Serializer};
use serde::Serialize as DeriveSerialize;
use serde_json::value::RawValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Cell {
    fn machine(&self) -> String {
        match self {
            Cell::Num(x) => machine_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn human(&self) -> String {
        match self {
            Cell::Num(x) => human_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => "-".into(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.into())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl Serialize for Cell {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Cell::Num(x) if x.is_finite() => {
                let raw = RawValue::from_string(machine_number(*x)).map_err(serde::ser::Error::custom)?;
                raw.serialize(s)
            }
            Cell::Num(x) => s.serialize_str(&x.to_string()),
            Cell::Int(i) => s.serialize_i64(*i),
            Cell::Text(t) => s.serialize_str(t),
            Cell::Missing => s.serialize_none(),
        }
    }
}

/// 17 significant digits, enough to round-trip every double.
pub fn machine_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn human_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if (1e-3..1e6).contains(&a) {
        format!("{x:.10}")
    } else {
        format!("{x:.3e}")
    }
}

#[derive(Debug, Clone, DeriveSerialize)]
pub struct Check {
    pub name: String,
    pub value: Cell,
    pub limit: Cell,
    pub pass: bool,
}

impl Check {
    /// Passes when value ≤ limit (NaN fails).
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value: Cell::Num(value), limit: Cell::Num(limit), pass: value <= limit }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self { name: name.into(), value: Cell::Missing, limit: Cell::Missing, pass }
    }
}

#[derive(Debug, Clone, DeriveSerialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }
}

#[derive(Debug, Clone, DeriveSerialize)]
pub struct Report {
    pub command: String,
    pub fields: Vec<(String, Cell)>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), fields: Vec::new(), tables: Vec::new(), checks: Vec::new(), warnings: Vec::new() }
    }

    pub fn field(&mut self, key: &str, value: impl Into<Cell>) {
        self.fields.push((key.into(), value.into()));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => self.text(),
            OutputFormat::Json => self.json(),
            OutputFormat::Csv => self.csv(),
        }
    }

    fn json(&self) -> String {
        #[derive(DeriveSerialize)]
        struct Out<'a> {
            command: &'a str,
            fields: Fields<'a>,
            tables: &'a [Table],
            checks: &'a [Check],
            passed: bool,
            warnings: &'a [String],
        }
        let out = Out {
            command: &self.command,
            fields: Fields(&self.fields),
            tables: &self.tables,
            checks: &self.checks,
            passed: self.passed(),
            warnings: &self.warnings,
        };
        let mut s = serde_json::to_string_pretty(&out).expect("report serializes");
        s.push('\n');
        s
    }

    fn csv(&self) -> String {
        let mut out = String::new();
        let section = |out: &mut String, header: &[String], rows: &mut dyn Iterator<Item = Vec<String>>| {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.iter().map(|c| csv_escape(c)).collect::<Vec<_>>().join(","));
                out.push('\n');
            }
        };
        if self.tables.is_empty() {
            let header = ["quantity".to_string(), "value".to_string()];
            section(&mut out, &header, &mut self.fields.iter().map(|(k, v)| vec![k.clone(), v.machine()]));
        }
        for t in &self.tables {
            section(&mut out, &t.columns, &mut t.rows.iter().map(|r| r.iter().map(Cell::machine).collect()));
        }
        if !self.checks.is_empty() {
            let header: Vec<String> = ["check", "value", "limit", "status"].iter().map(|s| s.to_string()).collect();
            section(
                &mut out,
                &header,
                &mut self.checks.iter().map(|c| {
                    vec![c.name.clone(), c.value.machine(), c.limit.machine(), status(c.pass).into()]
                }),
            );
        }
        out
    }

    fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.command);
        let width = self.fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in &self.fields {
            let _ = writeln!(out, "  {k:<width$}  {}", v.human());
        }
        for t in &self.tables {
            let cells: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(Cell::human).collect()).collect();
            let widths: Vec<usize> = (0..t.columns.len())
                .map(|j| cells.iter().map(|r| r[j].len()).chain([t.columns[j].len()]).max().unwrap_or(0))
                .collect();
            let _ = writeln!(out, "\n{}", t.name);
            let line = |row: &[String]| {
                row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
            };
            let _ = writeln!(out, "  {}", line(&t.columns));
            for r in &cells {
                let _ = writeln!(out, "  {}", line(r));
            }
        }
        if !self.checks.is_empty() {
            let _ = writeln!(out, "\nchecks");
            for c in &self.checks {
                match (&c.value, &c.limit) {
                    (Cell::Missing, _) => {
                        let _ = writeln!(out, "  {}  {}", status(c.pass), c.name);
                    }
                    (v, l) => {
                        let _ = writeln!(out, "  {}  {}  {} <= {}", status(c.pass), c.name, v.human(), l.human());
                    }
                }
            }
        }
        out
    }
}

/// Fields as a JSON object in insertion order.
struct Fields<'a>(&'a [(String, Cell)]);

impl Serialize for Fields<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.0.iter().map(|(k, v)| (k, v)))
    }
}

fn status(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("sample");
        r.field("pi", std::f64::consts::PI);
        r.field("third", 1.0 / 3.0);
        r.field("name", "x1^2, x2^2");
        r.checks.push(Check::at_most("small", 1e-12, 1e-6));
        r
    }

    #[test]
    fn json_numbers_round_trip() {
        let text = sample().render(OutputFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["fields"]["pi"].as_f64().unwrap().to_bits(), std::f64::consts::PI.to_bits());
        assert_eq!(v["fields"]["third"].as_f64().unwrap().to_bits(), (1.0f64 / 3.0).to_bits());
        assert_eq!(v["passed"], serde_json::Value::Bool(true));
        assert!(text.contains("3.1415926535897931e0"));
    }

    #[test]
    fn csv_layout() {
        let text = sample().render(OutputFormat::Csv);
        assert!(!text.contains('\r'));
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("quantity,value"));
        assert_eq!(lines.next(), Some("pi,3.1415926535897931e0"));
        assert!(text.contains("name,\"x1^2, x2^2\"\n"));
        assert!(text.contains("\ncheck,value,limit,status\nsmall,"));
    }

    #[test]
    fn failing_check() {
        let mut r = sample();
        r.checks.push(Check::at_most("nan", f64::NAN, 1.0));
        assert!(!r.passed());
        assert!(r.render(OutputFormat::Text).contains("FAIL  nan"));
    }
}
