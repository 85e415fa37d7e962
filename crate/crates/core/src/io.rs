//! Numeric CSV tables. Empty cells, `NA` and `nan` read as missing.

use std::io::{Read, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// Row-major, `headers.len()` values per row.
    pub values: Vec<f64>,
}

impl Table {
    pub fn width(&self) -> usize {
        self.headers.len()
    }

    pub fn n_rows(&self) -> usize {
        if self.headers.is_empty() {
            0
        } else {
            self.values.len() / self.headers.len()
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Copy without the named column, if present.
    pub fn drop_column(&self, name: &str) -> Table {
        let Some(c) = self.column(name) else {
            return self.clone();
        };
        let w = self.width();
        let headers = self.headers.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, h)| h.clone()).collect();
        let values = self
            .values
            .chunks_exact(w)
            .flat_map(|r| r.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| *v))
            .collect();
        Table { headers, values }
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
        _ => Error::SchemaMismatch(e.to_string()),
    }
}

pub fn parse_cell(s: &str) -> Option<f64> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Some(f64::NAN);
    }
    t.parse().ok()
}

pub fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::SchemaMismatch("CSV has no header".into()));
    }
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        for (j, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| {
                Error::SchemaMismatch(format!("row {i}, column `{}`: `{cell}` is not numeric", headers[j]))
            })?;
            values.push(v);
        }
    }
    Ok(Table { headers, values })
}

pub fn format_cell(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_table<W: Write>(writer: W, table: &Table) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.headers).map_err(csv_err)?;
    if table.width() > 0 {
        for row in table.values.chunks_exact(table.width()) {
            w.write_record(row.iter().map(|&v| format_cell(v))).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits_and_missing() {
        let t = Table {
            headers: vec!["a".into(), "b".into()],
            values: vec![0.1 + 0.2, f64::NAN, -1e-300, 12345.678901234567],
        };
        let mut buf = Vec::new();
        write_table(&mut buf, &t).unwrap();
        let back = read_table(buf.as_slice()).unwrap();
        assert_eq!(back.headers, t.headers);
        for (a, b) in back.values.iter().zip(&t.values) {
            assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
    }

    #[test]
    fn non_numeric_cell_names_column() {
        let err = read_table("x,y\n1,abc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("`y`"));
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(read_table("x,y\n1\n".as_bytes()).is_err());
    }
}
