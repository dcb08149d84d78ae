//! CSV dialect: comma separated, header row, RFC-4180 quoting. Column types
//! are inferred in the order int, float, bool, string; empty fields are null.

use std::path::Path;

use crate::error::StdlibError;
use crate::value::{Column, ColumnType, Datum, Table};

fn file_error(path: &Path, e: impl ToString) -> StdlibError {
    StdlibError::File {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_csv_file(path: &Path) -> Result<Table, StdlibError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| file_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| file_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    for (i, h) in headers.iter().enumerate() {
        if headers[..i].contains(h) {
            return Err(StdlibError::DuplicateColumn(h.clone()));
        }
    }
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
    for record in reader.records() {
        let record = record.map_err(|e| file_error(path, e))?;
        for (i, field) in record.iter().enumerate() {
            raw[i].push(field.to_string());
        }
    }
    Ok(Table {
        columns: headers
            .into_iter()
            .zip(raw)
            .map(|(name, fields)| infer_column(name, fields))
            .collect(),
    })
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn infer_column(name: String, fields: Vec<String>) -> Column {
    let present = || fields.iter().filter(|f| !f.is_empty());
    let ty = if present().next().is_none() {
        ColumnType::Str
    } else if present().all(|f| f.parse::<i64>().is_ok()) {
        ColumnType::Int
    } else if present().all(|f| f.parse::<f64>().is_ok()) {
        ColumnType::Float
    } else if present().all(|f| parse_bool(f).is_some()) {
        ColumnType::Bool
    } else {
        ColumnType::Str
    };
    let cells = fields
        .into_iter()
        .map(|f| {
            if f.is_empty() {
                return Datum::Null;
            }
            match ty {
                ColumnType::Int => Datum::Int(f.parse().unwrap()),
                ColumnType::Float => Datum::Float(f.parse().unwrap()),
                ColumnType::Bool => Datum::Bool(parse_bool(&f).unwrap()),
                ColumnType::Str => Datum::Str(f),
            }
        })
        .collect();
    Column { name, ty, cells }
}

pub fn write_csv_file(table: &Table, path: &Path) -> Result<(), StdlibError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| file_error(path, e))?;
    writer
        .write_record(table.column_names())
        .map_err(|e| file_error(path, e))?;
    for i in 0..table.row_count() {
        let row: Vec<String> = table
            .row(i)
            .iter()
            .map(|d| match d {
                // keep a decimal point so the column reads back as float
                Datum::Float(f) => format!("{f:?}"),
                d => d.to_string(),
            })
            .collect();
        writer.write_record(&row).map_err(|e| file_error(path, e))?;
    }
    writer.flush().map_err(|e| file_error(path, e))
}
