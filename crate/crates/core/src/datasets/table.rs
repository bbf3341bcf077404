//! Column-typed tables with CSV ingest and egress.
//!
//! CSV follows RFC 4180: UTF-8, a header row, `.` as decimal separator.
//! A column is numeric when every cell parses as a finite number, otherwise
//! it is categorical and cells are kept verbatim.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::DataMatrix;

use super::predicate::Predicate;

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, ColumnData::Numeric(_))
    }

    fn select(&self, mask: &[bool]) -> ColumnData {
        fn keep<T: Clone>(v: &[T], mask: &[bool]) -> Vec<T> {
            v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x.clone()).collect()
        }
        match self {
            ColumnData::Numeric(v) => ColumnData::Numeric(keep(v, mask)),
            ColumnData::Categorical(v) => ColumnData::Categorical(keep(v, mask)),
        }
    }

    fn cell_text(&self, row: usize) -> String {
        match self {
            ColumnData::Numeric(v) => format!("{:?}", v[row]),
            ColumnData::Categorical(v) => v[row].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self { name: name.into(), data: ColumnData::Numeric(values) }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical(values.into_iter().map(Into::into).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    columns: Vec<Column>,
    rows: usize,
}

impl Table {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let rows = columns.first().map_or(0, |c| c.data.len());
        let mut names = HashSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name {:?}", c.name)));
            }
            if c.data.len() != rows {
                return Err(Error::Schema(format!(
                    "column {:?} has {} rows, expected {rows}",
                    c.name,
                    c.data.len()
                )));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Rows where `mask` is true, all columns kept.
    pub fn select_rows(&self, mask: &[bool]) -> Result<Table> {
        if mask.len() != self.rows {
            return Err(Error::Dimension(format!(
                "row mask has {} entries for {} rows",
                mask.len(),
                self.rows
            )));
        }
        let columns = self
            .columns
            .iter()
            .map(|c| Column { name: c.name.clone(), data: c.data.select(mask) })
            .collect();
        Table::new(columns)
    }

    /// Treats every column as a numeric feature.
    pub fn to_matrix(&self) -> Result<DataMatrix> {
        let names = self.column_names();
        for c in &self.columns {
            if !c.data.is_numeric() {
                return Err(Error::Schema(format!("column {:?} is not numeric", c.name)));
            }
        }
        numeric_matrix(self, &names, Encoding::Ordinal)
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, csv::Position::line);
    Error::Parse { line, message: e.to_string() }
}

pub fn read_csv<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() {
        return Err(Error::Parse { line: 1, message: "missing header row".into() });
    }
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let mut seen = HashSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(Error::Parse { line: 1, message: format!("duplicate header {name:?}") });
        }
    }

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    for record in rdr.records() {
        let record = record.map_err(csv_error)?;
        if record.len() != names.len() {
            let line = record.position().map_or(0, csv::Position::line);
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        for (col, field) in cells.iter_mut().zip(record.iter()) {
            col.push(field.to_owned());
        }
    }

    let columns = names
        .into_iter()
        .zip(cells)
        .map(|(name, raw)| {
            let parsed: Option<Vec<f64>> = raw
                .iter()
                .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect();
            let data = match parsed {
                Some(v) => ColumnData::Numeric(v),
                None => ColumnData::Categorical(raw),
            };
            Column { name, data }
        })
        .collect();
    Table::new(columns)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Table> {
    read_csv(File::open(path)?)
}

/// Writes the table; numbers use the shortest representation that parses
/// back to the same `f64`.
pub fn write_csv<W: Write>(table: &Table, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(e.into());
    wtr.write_record(table.column_names()).map_err(to_io)?;
    for row in 0..table.num_rows() {
        wtr.write_record(table.columns.iter().map(|c| c.data.cell_text(row)))
            .map_err(to_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    write_csv(table, File::create(path)?)
}

/// A matrix as a table with columns `x0, x1, ...`.
pub fn matrix_table(x: &DataMatrix) -> Table {
    let columns = (0..x.cols())
        .map(|j| Column::numeric(format!("x{j}"), x.iter_rows().map(|r| r[j]).collect()))
        .collect();
    Table::new(columns).expect("generated names are unique")
}

/// Keeps the rows satisfying every atom of `predicate`.
pub fn filter_rows(table: &Table, predicate: &Predicate) -> Result<Table> {
    let mask = predicate.evaluate(table)?;
    table.select_rows(&mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// One indicator column per category.
    OneHot,
    /// A single column holding the category's index.
    Ordinal,
}

/// Builds a feature matrix from the named columns. Numeric columns pass
/// through; categorical ones are encoded with categories numbered in order
/// of first appearance.
pub fn numeric_matrix(table: &Table, columns: &[&str], encoding: Encoding) -> Result<DataMatrix> {
    if columns.is_empty() {
        return Err(Error::Schema("no columns selected".into()));
    }
    let mut features: Vec<Vec<f64>> = Vec::new();
    for name in columns {
        let col = table
            .column(name)
            .ok_or_else(|| Error::Schema(format!("unknown column {name:?}")))?;
        match &col.data {
            ColumnData::Numeric(v) => features.push(v.clone()),
            ColumnData::Categorical(v) => {
                let mut categories: Vec<&str> = Vec::new();
                let codes: Vec<usize> = v
                    .iter()
                    .map(|s| match categories.iter().position(|c| c == s) {
                        Some(i) => i,
                        None => {
                            categories.push(s);
                            categories.len() - 1
                        }
                    })
                    .collect();
                match encoding {
                    Encoding::Ordinal => features.push(codes.iter().map(|&c| c as f64).collect()),
                    Encoding::OneHot => {
                        for k in 0..categories.len() {
                            features.push(codes.iter().map(|&c| f64::from(u8::from(c == k))).collect());
                        }
                    }
                }
            }
        }
    }
    let rows = table.num_rows();
    let cols = features.len();
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        values.extend(features.iter().map(|f| f[r]));
    }
    DataMatrix::new(rows, cols, values)
}
