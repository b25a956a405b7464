//! CSV emission and a strict reader for the fit subcommand.
//!
//! Numeric cells are written with 17 significant digits so binary64 values
//! survive a round trip; line endings are '\n'.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(s) => s.parse().ok(),
        }
    }
}

/// Render a full CSV document.
pub fn render_csv(header: &[String], rows: &[Vec<Cell>]) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        let line: Vec<String> = row.iter().map(Cell::render).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error("empty input")]
    Empty,
    #[error("row {row} has {got} fields, header has {expected}")]
    RaggedRow { row: usize, got: usize, expected: usize },
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("row {row}: cannot parse {value:?} as a number")]
    BadNumber { row: usize, value: String },
}

/// Parsed CSV: header plus string cells. No quoting or escaping; our own
/// output never needs it and foreign input with quotes is rejected upstream
/// by the numeric parse.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn parse_csv(text: &str) -> Result<CsvTable, CsvError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or(CsvError::Empty)?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(CsvError::Empty);
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
        if fields.len() != header.len() {
            return Err(CsvError::RaggedRow {
                row: i + 2,
                got: fields.len(),
                expected: header.len(),
            });
        }
        rows.push(fields);
    }
    Ok(CsvTable { header, rows })
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Result<usize, CsvError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CsvError::UnknownColumn(name.to_string()))
    }

    /// Extract two numeric columns as (x, y) pairs.
    pub fn xy(&self, x: &str, y: &str) -> Result<Vec<(f64, f64)>, CsvError> {
        let xi = self.column_index(x)?;
        let yi = self.column_index(y)?;
        let mut out = Vec::with_capacity(self.rows.len());
        for (i, row) in self.rows.iter().enumerate() {
            let parse = |s: &str| -> Result<f64, CsvError> {
                s.parse().map_err(|_| CsvError::BadNumber {
                    row: i + 2,
                    value: s.to_string(),
                })
            };
            out.push((parse(&row[xi])?, parse(&row[yi])?));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_cells_roundtrip() {
        let v = 0.1 + 0.2;
        let rendered = Cell::Float(v).render();
        let back: f64 = rendered.parse().unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn render_and_parse() {
        let header = vec!["n".to_string(), "gap".to_string()];
        let rows = vec![
            vec![Cell::Int(4), Cell::Float(0.5)],
            vec![Cell::Int(6), Cell::Float(0.25)],
        ];
        let text = render_csv(&header, &rows);
        let parsed = parse_csv(&text).unwrap();
        let xy = parsed.xy("n", "gap").unwrap();
        assert_eq!(xy, vec![(4.0, 0.5), (6.0, 0.25)]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(
            parse_csv("a,b\n1,2,3\n"),
            Err(CsvError::RaggedRow { .. })
        ));
    }

    #[test]
    fn empty_sweep_is_valid() {
        let text = render_csv(&["a".to_string()], &[]);
        let parsed = parse_csv(&text).unwrap();
        assert_eq!(parsed.rows.len(), 0);
    }
}
