//! Canonical binary serialization of values and their SHA-256 fingerprints.
//!
//! Layout: a 4-byte magic, then a kind tag and the kind's fields. Integers
//! are little-endian `u64`/`i64`, strings are length-prefixed UTF-8, floats
//! are written as IEEE-754 bit patterns with every NaN collapsed to one
//! canonical pattern. Tables are written schema first, then row-major.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::value::{Centroid, Column, ColumnType, Datum, Histogram, Model, Scalar, Table, Value};

const MAGIC: &[u8; 4] = b"FBV1";
const CANONICAL_NAN: u64 = 0x7ff8_0000_0000_0000;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Fingerprint(bytes.try_into().ok()?))
    }

    pub fn short(&self) -> String {
        self.to_hex()[..12].to_string()
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.short())
    }
}

impl Serialize for Fingerprint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Fingerprint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Fingerprint::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad fingerprint"))
    }
}

pub fn fingerprint(value: &Value) -> Fingerprint {
    fingerprint_bytes(&encode(value))
}

pub fn fingerprint_bytes(bytes: &[u8]) -> Fingerprint {
    Fingerprint(Sha256::digest(bytes).into())
}

pub fn encode(value: &Value) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(256));
    w.0.extend_from_slice(MAGIC);
    match value {
        Value::Table(t) => {
            w.u8(1);
            w.table(t);
        }
        Value::Column(c) => {
            w.u8(2);
            w.column(c);
        }
        Value::Model(m) => {
            w.u8(3);
            w.model(m);
        }
        Value::Scalar(s) => {
            w.u8(4);
            w.scalar(s);
        }
        Value::Histogram(h) => {
            w.u8(5);
            w.histogram(h);
        }
    }
    w.0
}

pub fn decode(bytes: &[u8]) -> Result<Value> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let value = match r.u8()? {
        1 => Value::Table(r.table()?),
        2 => Value::Column(r.column()?),
        3 => Value::Model(r.model()?),
        4 => Value::Scalar(r.scalar()?),
        5 => Value::Histogram(r.histogram()?),
        t => return Err(Error::Decode(format!("unknown value tag {t}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Decode("trailing bytes".into()));
    }
    Ok(value)
}

fn type_tag(ty: ColumnType) -> u8 {
    match ty {
        ColumnType::Int => 1,
        ColumnType::Float => 2,
        ColumnType::Bool => 3,
        ColumnType::Str => 4,
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, n: usize) {
        self.u64(n as u64);
    }

    fn f64(&mut self, v: f64) {
        let bits = if v.is_nan() {
            CANONICAL_NAN
        } else {
            v.to_bits()
        };
        self.u64(bits);
    }

    fn str(&mut self, s: &str) {
        self.len(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn datum(&mut self, d: &Datum) {
        match d {
            Datum::Null => self.u8(0),
            Datum::Int(i) => {
                self.u8(1);
                self.u64(*i as u64);
            }
            Datum::Float(f) => {
                self.u8(2);
                self.f64(*f);
            }
            Datum::Bool(b) => {
                self.u8(3);
                self.u8(*b as u8);
            }
            Datum::Str(s) => {
                self.u8(4);
                self.str(s);
            }
        }
    }

    fn table(&mut self, t: &Table) {
        self.len(t.columns.len());
        for c in &t.columns {
            self.str(&c.name);
            self.u8(type_tag(c.ty));
        }
        let rows = t.row_count();
        self.len(rows);
        for i in 0..rows {
            for c in &t.columns {
                self.datum(&c.cells[i]);
            }
        }
    }

    fn column(&mut self, c: &Column) {
        self.str(&c.name);
        self.u8(type_tag(c.ty));
        self.len(c.cells.len());
        for d in &c.cells {
            self.datum(d);
        }
    }

    fn model(&mut self, m: &Model) {
        self.str(&m.kind);
        self.len(m.hyperparams.len());
        for (k, v) in &m.hyperparams {
            self.str(k);
            self.f64(*v);
        }
        self.u8(m.fitted as u8);
        self.len(m.features.len());
        for f in &m.features {
            self.str(f);
        }
        match m.label_type {
            None => self.u8(0),
            Some(ty) => self.u8(type_tag(ty)),
        }
        self.len(m.centroids.len());
        for c in &m.centroids {
            self.datum(&c.label);
            self.len(c.mean.len());
            for x in &c.mean {
                self.f64(*x);
            }
        }
    }

    fn scalar(&mut self, s: &Scalar) {
        match s {
            Scalar::Number(n) => {
                self.u8(1);
                self.f64(*n);
            }
            Scalar::Str(v) => {
                self.u8(2);
                self.str(v);
            }
            Scalar::Bool(b) => {
                self.u8(3);
                self.u8(*b as u8);
            }
            Scalar::List(items) => {
                self.u8(4);
                self.len(items.len());
                for item in items {
                    self.scalar(item);
                }
            }
        }
    }

    fn histogram(&mut self, h: &Histogram) {
        self.str(&h.column);
        self.len(h.bin_edges.len());
        for e in &h.bin_edges {
            self.f64(*e);
        }
        self.len(h.counts.len());
        for c in &h.counts {
            self.u64(*c);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Decode("unexpected end of data".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // every encoded element takes at least one byte
        if n as usize > self.bytes.len() - self.pos {
            return Err(Error::Decode(format!("length {n} exceeds input")));
        }
        Ok(n as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Decode(format!("bad bool byte {b}"))),
        }
    }

    fn str(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Decode(e.to_string()))
    }

    fn column_type(&mut self) -> Result<ColumnType> {
        match self.u8()? {
            1 => Ok(ColumnType::Int),
            2 => Ok(ColumnType::Float),
            3 => Ok(ColumnType::Bool),
            4 => Ok(ColumnType::Str),
            t => Err(Error::Decode(format!("unknown column type {t}"))),
        }
    }

    fn datum(&mut self) -> Result<Datum> {
        Ok(match self.u8()? {
            0 => Datum::Null,
            1 => Datum::Int(self.u64()? as i64),
            2 => Datum::Float(self.f64()?),
            3 => Datum::Bool(self.bool()?),
            4 => Datum::Str(self.str()?),
            t => return Err(Error::Decode(format!("unknown datum tag {t}"))),
        })
    }

    fn table(&mut self) -> Result<Table> {
        let ncols = self.len()?;
        let mut columns = Vec::with_capacity(ncols);
        for _ in 0..ncols {
            let name = self.str()?;
            let ty = self.column_type()?;
            columns.push(Column {
                name,
                ty,
                cells: Vec::new(),
            });
        }
        let rows = self.u64()? as usize;
        if ncols == 0 && rows > 0 {
            return Err(Error::Decode("rows without columns".into()));
        }
        for _ in 0..rows {
            for c in columns.iter_mut() {
                let d = self.datum()?;
                c.cells.push(d);
            }
        }
        Ok(Table { columns })
    }

    fn column(&mut self) -> Result<Column> {
        let name = self.str()?;
        let ty = self.column_type()?;
        let n = self.len()?;
        let cells = (0..n).map(|_| self.datum()).collect::<Result<_>>()?;
        Ok(Column { name, ty, cells })
    }

    fn model(&mut self) -> Result<Model> {
        let kind = self.str()?;
        let nh = self.len()?;
        let mut hyperparams = std::collections::BTreeMap::new();
        for _ in 0..nh {
            let k = self.str()?;
            hyperparams.insert(k, self.f64()?);
        }
        let fitted = self.bool()?;
        let nf = self.len()?;
        let features = (0..nf).map(|_| self.str()).collect::<Result<_>>()?;
        let label_type = match self.u8()? {
            0 => None,
            _ => {
                self.pos -= 1;
                Some(self.column_type()?)
            }
        };
        let nc = self.len()?;
        let mut centroids = Vec::with_capacity(nc);
        for _ in 0..nc {
            let label = self.datum()?;
            let n = self.len()?;
            let mean = (0..n).map(|_| self.f64()).collect::<Result<_>>()?;
            centroids.push(Centroid { label, mean });
        }
        Ok(Model {
            kind,
            hyperparams,
            fitted,
            features,
            label_type,
            centroids,
        })
    }

    fn scalar(&mut self) -> Result<Scalar> {
        Ok(match self.u8()? {
            1 => Scalar::Number(self.f64()?),
            2 => Scalar::Str(self.str()?),
            3 => Scalar::Bool(self.bool()?),
            4 => {
                let n = self.len()?;
                Scalar::List((0..n).map(|_| self.scalar()).collect::<Result<_>>()?)
            }
            t => return Err(Error::Decode(format!("unknown scalar tag {t}"))),
        })
    }

    fn histogram(&mut self) -> Result<Histogram> {
        let column = self.str()?;
        let ne = self.len()?;
        let bin_edges = (0..ne).map(|_| self.f64()).collect::<Result<_>>()?;
        let nc = self.len()?;
        let counts = (0..nc).map(|_| self.u64()).collect::<Result<_>>()?;
        Ok(Histogram {
            column,
            bin_edges,
            counts,
        })
    }
}
