//! In-memory result tables and their CSV serialization.
//!
//! Every command reduces to one table with a self-describing header row.
//! Column names carry units in square brackets where a quantity is
//! dimensionful, e.g. `delta_c [w_R]`. Floats are written in the shortest
//! form that parses back to the identical bit pattern, so identical runs
//! produce identical bytes.

use crate::error::{Error, Result};

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    /// Written as an empty field; used where a column does not apply to a row.
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A rectangular result table with named columns.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row, rejecting any width mismatch with the header.
    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::Numerical(format!(
                "table row has {} cells, header has {}",
                row.len(),
                self.columns.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Serializes the table as CSV with the header first.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        write_record(&mut out, self.columns.iter().map(String::as_str));
        for row in &self.rows {
            let fields: Vec<String> = row.iter().map(format_cell).collect();
            write_record(&mut out, fields.iter().map(String::as_str));
        }
        out
    }
}

fn write_record<'a>(out: &mut String, fields: impl Iterator<Item = &'a str>) {
    let mut first = true;
    for field in fields {
        if !first {
            out.push(',');
        }
        first = false;
        push_escaped(out, field);
    }
    out.push('\n');
}

fn push_escaped(out: &mut String, field: &str) {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        out.push('"');
        for ch in field.chars() {
            if ch == '"' {
                out.push('"');
            }
            out.push(ch);
        }
        out.push('"');
    } else {
        out.push_str(field);
    }
}

fn format_cell(cell: &Cell) -> String {
    match cell {
        Cell::Float(x) => format_f64(*x),
        Cell::Int(x) => x.to_string(),
        Cell::Text(s) => s.clone(),
        Cell::Bool(b) => b.to_string(),
        Cell::Empty => String::new(),
    }
}

/// Shortest decimal form of `x` that round-trips to the same `f64`.
///
/// Plain decimal notation is used in the range where it stays compact,
/// exponent notation outside it; both forms come from the standard
/// round-trip formatter.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    let mag = x.abs();
    if (1e-4..1e16).contains(&mag) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_their_csv_form() {
        for &x in &[
            0.0,
            1.0,
            -1.5,
            0.1,
            1.0 / 3.0,
            6.532_987_654e-7,
            9.999e18,
            -2.2250738585072014e-308,
            f64::MAX,
        ] {
            let s = format_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
        assert!(format_f64(f64::NAN) == "NaN");
        assert!(format_f64(f64::INFINITY) == "inf");
    }

    #[test]
    fn header_and_rows_share_the_width() {
        let mut t = Table::new(&["a", "b"]);
        t.push_row(vec![Cell::Float(1.0), Cell::Text("x".into())])
            .unwrap();
        assert!(t.push_row(vec![Cell::Float(1.0)]).is_err());
        let csv = t.to_csv();
        assert_eq!(csv, "a,b\n1,x\n");
    }

    #[test]
    fn fields_with_commas_are_quoted() {
        let mut t = Table::new(&["note"]);
        t.push_row(vec![Cell::Text("a,b\"c".into())]).unwrap();
        assert_eq!(t.to_csv(), "note\n\"a,b\"\"c\"\n");
    }
}
