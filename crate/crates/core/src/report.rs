//! Deterministic tabular report files.
//!
//! A report is a typed TSV table with two header comments:
//!
//! ```text
//! # schema: distance v1
//! # columns: series:text\tw1:number
//! s000\t0.0125
//! s001\t0.01
//! @median\t0.01125
//! ```
//!
//! Rows prefixed `@` are summary rows (a label plus one value per
//! remaining column) and always follow the data rows.  Numbers are
//! printed with Rust's shortest-round-trip formatting, so
//! `parse(render(r)) == r` exactly and re-running a pipeline with the
//! same inputs produces byte-identical files.  Anything wall-clock or
//! host-specific is banned from reports for the same reason.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

// ── Cells and columns ───────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Text,
    Number,
}

impl CellKind {
    fn tag(self) -> &'static str {
        match self {
            CellKind::Text => "text",
            CellKind::Number => "number",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Number(f64),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn number(v: f64) -> Cell {
        Cell::Number(v)
    }

    fn kind(&self) -> CellKind {
        match self {
            Cell::Text(_) => CellKind::Text,
            Cell::Number(_) => CellKind::Number,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            // shortest representation that parses back to the same bits
            Cell::Number(v) => format!("{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: CellKind,
}

impl Column {
    pub fn text(name: impl Into<String>) -> Column {
        Column {
            name: name.into(),
            kind: CellKind::Text,
        }
    }

    pub fn number(name: impl Into<String>) -> Column {
        Column {
            name: name.into(),
            kind: CellKind::Number,
        }
    }
}

// ── The report ──────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Schema name, e.g. "distance".
    pub kind: String,
    pub version: u32,
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Cell>>,
    /// (label, one value per non-leading column); rendered after the
    /// data rows with a `@` prefix.
    pub summaries: Vec<(String, Vec<Cell>)>,
}

fn check_token(token: &str, what: &str) -> Result<()> {
    if token.is_empty() {
        return Err(Error::config(format!("report: empty {what}")));
    }
    if token.contains(['\t', '\n', '\r', ':']) {
        return Err(Error::config(format!(
            "report: {what} '{token}' contains a reserved character"
        )));
    }
    Ok(())
}

fn check_text_cell(s: &str, leading: bool) -> Result<()> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(Error::data(format!(
            "report: text cell {s:?} contains a tab or newline"
        )));
    }
    if leading && (s.is_empty() || s.starts_with('@') || s.starts_with('#')) {
        return Err(Error::data(format!(
            "report: leading cell {s:?} would be mistaken for a header or summary"
        )));
    }
    Ok(())
}

impl Report {
    pub fn new(kind: impl Into<String>, columns: Vec<Column>) -> Result<Report> {
        let kind = kind.into();
        check_token(&kind, "schema name")?;
        if columns.is_empty() {
            return Err(Error::config("report: need at least one column"));
        }
        for c in &columns {
            check_token(&c.name, "column name")?;
        }
        Ok(Report {
            kind,
            version: 1,
            columns,
            rows: Vec::new(),
            summaries: Vec::new(),
        })
    }

    fn check_cells(&self, cells: &[Cell], expected: usize) -> Result<()> {
        if cells.len() != expected {
            return Err(Error::data(format!(
                "report: {} cells for {} columns",
                cells.len(),
                expected
            )));
        }
        let offset = self.columns.len() - expected;
        for (i, cell) in cells.iter().enumerate() {
            let column = &self.columns[offset + i];
            if cell.kind() != column.kind {
                return Err(Error::data(format!(
                    "report: column '{}' is {}, got a {} cell",
                    column.name,
                    column.kind.tag(),
                    cell.kind().tag()
                )));
            }
            if let Cell::Number(v) = cell {
                if !v.is_finite() {
                    return Err(Error::data(format!(
                        "report: non-finite number in column '{}'",
                        column.name
                    )));
                }
            }
            if let Cell::Text(s) = cell {
                check_text_cell(s, offset + i == 0)?;
            }
        }
        Ok(())
    }

    pub fn push_row(&mut self, cells: Vec<Cell>) -> Result<()> {
        self.check_cells(&cells, self.columns.len())?;
        self.rows.push(cells);
        Ok(())
    }

    /// A summary row: a label plus one value for every column after
    /// the first (the first column is where the label is rendered).
    pub fn push_summary(&mut self, label: impl Into<String>, cells: Vec<Cell>) -> Result<()> {
        let label = label.into();
        check_token(&label, "summary label")?;
        self.check_cells(&cells, self.columns.len() - 1)?;
        self.summaries.push((label, cells));
        Ok(())
    }

    // ── Rendering ───────────────────────────────────────────────────

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# schema: {} v{}", self.kind, self.version).unwrap();
        let header: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{}:{}", c.name, c.kind.tag()))
            .collect();
        writeln!(out, "# columns: {}", header.join("\t")).unwrap();
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", line.join("\t")).unwrap();
        }
        for (label, cells) in &self.summaries {
            let mut line = vec![format!("@{label}")];
            line.extend(cells.iter().map(Cell::render));
            writeln!(out, "{}", line.join("\t")).unwrap();
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.render()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    // ── Parsing ─────────────────────────────────────────────────────

    pub fn parse(text: &str) -> Result<Report> {
        let mut lines = text.lines();
        let schema_line = lines
            .next()
            .ok_or_else(|| Error::data("report: empty file"))?;
        let rest = schema_line
            .strip_prefix("# schema: ")
            .ok_or_else(|| Error::data("report: first line is not a schema header"))?;
        let (kind, version) = rest
            .rsplit_once(" v")
            .ok_or_else(|| Error::data("report: schema header lacks a version"))?;
        let version: u32 = version
            .parse()
            .map_err(|_| Error::data(format!("report: bad schema version '{version}'")))?;

        let columns_line = lines
            .next()
            .ok_or_else(|| Error::data("report: missing columns header"))?;
        let columns_spec = columns_line
            .strip_prefix("# columns: ")
            .ok_or_else(|| Error::data("report: second line is not a columns header"))?;
        let mut columns = Vec::new();
        for part in columns_spec.split('\t') {
            let (name, tag) = part.rsplit_once(':').ok_or_else(|| {
                Error::data(format!("report: column '{part}' lacks a type tag"))
            })?;
            let kind = match tag {
                "text" => CellKind::Text,
                "number" => CellKind::Number,
                other => {
                    return Err(Error::data(format!(
                        "report: unknown column type '{other}'"
                    )))
                }
            };
            columns.push(Column {
                name: name.to_string(),
                kind,
            });
        }

        let mut report = Report::new(kind, columns)?;
        report.version = version;
        let mut in_summaries = false;
        for (lineno, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split('\t').collect();
            if let Some(label) = cells[0].strip_prefix('@') {
                in_summaries = true;
                let values = report.parse_cells(&cells[1..], lineno + 3, 1)?;
                report.push_summary(label, values)?;
            } else {
                if in_summaries {
                    return Err(Error::data(format!(
                        "report: line {}: data row after summary rows",
                        lineno + 3
                    )));
                }
                let values = report.parse_cells(&cells, lineno + 3, 0)?;
                report.push_row(values)?;
            }
        }
        Ok(report)
    }

    fn parse_cells(&self, raw: &[&str], lineno: usize, offset: usize) -> Result<Vec<Cell>> {
        if raw.len() != self.columns.len() - offset {
            return Err(Error::data(format!(
                "report: line {lineno}: {} cells, expected {}",
                raw.len(),
                self.columns.len() - offset
            )));
        }
        raw.iter()
            .zip(&self.columns[offset..])
            .map(|(s, column)| match column.kind {
                CellKind::Text => Ok(Cell::Text(s.to_string())),
                CellKind::Number => s
                    .parse::<f64>()
                    .map(Cell::Number)
                    .map_err(|_| {
                        Error::data(format!(
                            "report: line {lineno}: '{s}' is not a number (column '{}')",
                            column.name
                        ))
                    }),
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Report> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

// ────────────────────────────────────────────────────────────────────
