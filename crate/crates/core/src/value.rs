//! Runtime values. Values are immutable once constructed; operations always
//! return new values.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};

use crate::dsl::Literal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Int,
    Float,
    Bool,
    Str,
}

impl ColumnType {
    pub fn is_numeric(self) -> bool {
        matches!(self, ColumnType::Int | ColumnType::Float)
    }
}

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Datum {
    Null,
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(String),
}

impl Datum {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Datum::Int(i) => Some(*i as f64),
            Datum::Float(f) => Some(*f),
            Datum::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Datum::Null | Datum::Str(_) => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Datum::Null => 0,
            Datum::Bool(_) => 1,
            Datum::Int(_) => 2,
            Datum::Float(_) => 3,
            Datum::Str(_) => 4,
        }
    }

    /// Total order used for class labels.
    pub fn total_cmp(&self, other: &Datum) -> Ordering {
        match (self, other) {
            (Datum::Bool(a), Datum::Bool(b)) => a.cmp(b),
            (Datum::Int(a), Datum::Int(b)) => a.cmp(b),
            (Datum::Float(a), Datum::Float(b)) => a.total_cmp(b),
            (Datum::Str(a), Datum::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Datum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Datum::Null => Ok(()),
            Datum::Int(i) => write!(f, "{i}"),
            Datum::Float(x) => write!(f, "{x}"),
            Datum::Bool(b) => write!(f, "{b}"),
            Datum::Str(s) => f.write_str(s),
        }
    }
}

impl Serialize for Datum {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Datum::Null => s.serialize_none(),
            Datum::Int(i) => s.serialize_i64(*i),
            Datum::Float(f) => s.serialize_f64(*f),
            Datum::Bool(b) => s.serialize_bool(*b),
            Datum::Str(v) => s.serialize_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
    pub cells: Vec<Datum>,
}

impl Column {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn numeric_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().filter_map(Datum::as_f64)
    }
}

impl Serialize for Column {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("name", &self.name)?;
        map.serialize_entry("type", &self.ty)?;
        map.serialize_entry("cells", &self.cells)?;
        map.end()
    }
}

/// Column-major table. All columns have the same length and distinct names.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<Column>,
}

impl Table {
    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn row(&self, index: usize) -> Vec<&Datum> {
        self.columns.iter().map(|c| &c.cells[index]).collect()
    }

    /// Keeps the rows selected by `indices`, in that order.
    pub fn take_rows(&self, indices: impl Iterator<Item = usize> + Clone) -> Table {
        Table {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    ty: c.ty,
                    cells: indices.clone().map(|i| c.cells[i].clone()).collect(),
                })
                .collect(),
        }
    }
}

struct Rows<'a>(&'a Table);

impl Serialize for Rows<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let n = self.0.row_count();
        let mut seq = s.serialize_seq(Some(n))?;
        for i in 0..n {
            seq.serialize_element(&self.0.row(i))?;
        }
        seq.end()
    }
}

impl Serialize for Table {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Field<'a> {
            name: &'a str,
            #[serde(rename = "type")]
            ty: ColumnType,
        }
        let schema: Vec<Field> = self
            .columns
            .iter()
            .map(|c| Field {
                name: &c.name,
                ty: c.ty,
            })
            .collect();
        let mut map = s.serialize_map(Some(2))?;
        map.serialize_entry("schema", &schema)?;
        map.serialize_entry("rows", &Rows(self))?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Str(String),
    Bool(bool),
    List(Vec<Scalar>),
}

impl From<&Literal> for Scalar {
    fn from(lit: &Literal) -> Self {
        match lit {
            Literal::Number(n) => Scalar::Number(*n),
            Literal::Str(s) => Scalar::Str(s.clone()),
            Literal::Bool(b) => Scalar::Bool(*b),
            Literal::List(items) => Scalar::List(items.iter().map(Scalar::from).collect()),
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Number(n) => write!(f, "{n}"),
            Scalar::Str(s) => f.write_str(s),
            Scalar::Bool(b) => write!(f, "{b}"),
            Scalar::List(items) => {
                let parts: Vec<String> = items.iter().map(ToString::to_string).collect();
                write!(f, "[{}]", parts.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Centroid {
    pub label: Datum,
    pub mean: Vec<f64>,
}

/// A nearest-centroid classifier standing in for a real model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Model {
    pub kind: String,
    pub hyperparams: BTreeMap<String, f64>,
    pub fitted: bool,
    pub features: Vec<String>,
    pub label_type: Option<ColumnType>,
    pub centroids: Vec<Centroid>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub column: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Value {
    Table(Table),
    Column(Column),
    Model(Model),
    Scalar(Scalar),
    Histogram(Histogram),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Table(_) => "table",
            Value::Column(_) => "column",
            Value::Model(_) => "model",
            Value::Scalar(_) => "scalar",
            Value::Histogram(_) => "histogram",
        }
    }
}

impl From<Table> for Value {
    fn from(t: Table) -> Self {
        Value::Table(t)
    }
}

impl From<Scalar> for Value {
    fn from(s: Scalar) -> Self {
        Value::Scalar(s)
    }
}
