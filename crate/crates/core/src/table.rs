//! CSV tables with a `# key=value` metadata header, and plot-data emission.
//!
//! The header records parameters only (no timestamps or host data), so two
//! runs with the same inputs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::{Error, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x != 0.0 && (x.abs() < 1e-4 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x:?}")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Column header and rows, without metadata.
    pub fn body(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str(&self.body());
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        fs::write(path, self.render())?;
        Ok(())
    }
}

/// Strips `#` metadata lines, leaving the comparable body.
pub fn body_of(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Declarative description of a plot of a table; nothing is rendered.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub series: Vec<String>,
    pub x_label: String,
    pub y_label: String,
    pub x_log: bool,
    pub y_log: bool,
    /// `line` or `points`.
    pub style: String,
}

impl PlotSpec {
    pub fn line(title: &str, x: &str, series: &[&str]) -> Self {
        Self {
            title: title.into(),
            x: x.into(),
            series: series.iter().map(|s| s.to_string()).collect(),
            x_label: x.into(),
            y_label: series.join(", "),
            x_log: false,
            y_log: false,
            style: "line".into(),
        }
    }

    pub fn render(&self, data_file: &str) -> String {
        format!(
            "data={data_file}\ntitle={}\nx={}\nseries={}\nx_label={}\ny_label={}\nx_log={}\ny_log={}\nstyle={}\n",
            self.title,
            self.x,
            self.series.join(","),
            self.x_label,
            self.y_label,
            self.x_log,
            self.y_log,
            self.style
        )
    }
}

/// Writes `<stem>.csv` and `<stem>.plot` and returns both paths.
pub fn emit_plotdata(table: &Table, spec: &PlotSpec, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if table.is_empty() {
        return Err(Error::Io(io::Error::new(
            io::ErrorKind::InvalidInput,
            "refusing to emit plot data for an empty table",
        )));
    }
    for col in std::iter::once(&spec.x).chain(&spec.series) {
        if !table.columns.contains(col) {
            return Err(Error::Io(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("plot column `{col}` is not in the table"),
            )));
        }
    }
    let data = stem.with_extension("csv");
    let plot = stem.with_extension("plot");
    table.write(&data)?;
    let name = data.file_name().and_then(|n| n.to_str()).unwrap_or("data.csv");
    fs::write(&plot, spec.render(name))?;
    Ok((data, plot))
}
