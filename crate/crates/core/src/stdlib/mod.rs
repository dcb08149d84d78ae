//! Standard library of table and model operations: static signatures for
//! the type checker and the runtime implementations.

mod csv_io;
mod model;
mod table_ops;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use crate::dsl::{Literal, Param, SemanticType, SignatureLookup, TypeSignature};
use crate::error::StdlibError;
use crate::value::{Column, Model, Scalar, Table, Value};

pub use csv_io::{read_csv_file, write_csv_file};

/// Environment of a running operation.
#[derive(Debug, Clone, Default)]
pub struct CallContext {
    /// Relative paths are resolved against this directory.
    pub base_dir: PathBuf,
}

impl CallContext {
    pub fn new(base_dir: impl Into<PathBuf>) -> Self {
        CallContext {
            base_dir: base_dir.into(),
        }
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub struct Stdlib {
    signatures: BTreeMap<&'static str, TypeSignature>,
}

impl SignatureLookup for Stdlib {
    fn signature(&self, name: &str) -> Option<&TypeSignature> {
        self.signatures.get(name)
    }
}

impl Stdlib {
    pub fn global() -> &'static Stdlib {
        static LIB: OnceLock<Stdlib> = OnceLock::new();
        LIB.get_or_init(Stdlib::build)
    }

    pub fn function_names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.signatures.keys().copied()
    }

    fn build() -> Stdlib {
        use SemanticType::*;
        let req = Param::required;
        let num = |n: f64| Literal::Number(n);
        let sigs = vec![
            TypeSignature::new("read_csv", vec![req("path", String)], vec![Table]),
            TypeSignature::new(
                "write_csv",
                vec![req("table", Table), req("path", String)],
                vec![Bool],
            ),
            TypeSignature::new(
                "drop",
                vec![req("table", Table), req("columns", List)],
                vec![Table],
            ),
            TypeSignature::new(
                "keep",
                vec![req("table", Table), req("column", String)],
                vec![Column],
            ),
            TypeSignature::new(
                "select",
                vec![req("table", Table), req("columns", List)],
                vec![Table],
            ),
            TypeSignature::new(
                "head",
                vec![req("table", Table), Param::optional("n", Number, num(5.0))],
                vec![Table],
            ),
            TypeSignature::new("columns", vec![req("table", Table)], vec![List]),
            TypeSignature::new("count_rows", vec![req("table", Table)], vec![Number]),
            TypeSignature::new("describe", vec![req("table", Table)], vec![Table]),
            TypeSignature::new(
                "histogram",
                vec![
                    req("table", Table),
                    req("column", String),
                    Param::optional("bins", Number, num(10.0)),
                ],
                vec![Histogram],
            ),
            TypeSignature::new(
                "column_histogram",
                vec![
                    req("column", Column),
                    Param::optional("bins", Number, num(10.0)),
                ],
                vec![Histogram],
            ),
            TypeSignature::new("to_table", vec![req("column", Column)], vec![Table]),
            TypeSignature::new(
                "split",
                vec![
                    req("table", Table),
                    Param::optional("fraction", Number, num(0.8)),
                ],
                vec![Table, Table],
            ),
            TypeSignature::new(
                "SVC",
                vec![Param::optional("c", Number, num(1.0))],
                vec![Model],
            ),
            TypeSignature::new(
                "fit",
                vec![req("model", Model), req("x", Table), req("y", Column)],
                vec![Model],
            ),
            TypeSignature::new(
                "predict",
                vec![req("model", Model), req("x", Table)],
                vec![Column],
            ),
            TypeSignature::new("hyperparameters", vec![req("model", Model)], vec![Table]),
            TypeSignature::new("fitted_params", vec![req("model", Model)], vec![Table]),
            TypeSignature::new(
                "random_table",
                vec![
                    req("seed", Number),
                    req("rows", Number),
                    req("cols", Number),
                ],
                vec![Table],
            ),
            TypeSignature::new(
                "random_numbers",
                vec![req("seed", Number), req("n", Number)],
                vec![Column],
            ),
        ];
        Stdlib {
            signatures: sigs.into_iter().map(|s| (s.name, s)).collect(),
        }
    }

    /// Runs a function. Literal arguments arrive as scalar values.
    pub fn call(
        &self,
        name: &str,
        args: &[&Value],
        ctx: &CallContext,
    ) -> Result<Vec<Value>, StdlibError> {
        let a = Args(args);
        let one = |v: Value| Ok(vec![v]);
        match name {
            "read_csv" => one(Value::Table(read_csv_file(
                &ctx.resolve(a.string(0, "path")?),
            )?)),
            "write_csv" => {
                let path = ctx.resolve(a.string(1, "path")?);
                write_csv_file(a.table(0, "table")?, &path)?;
                one(Value::Scalar(Scalar::Bool(true)))
            }
            "drop" => {
                one(table_ops::drop(a.table(0, "table")?, &a.string_list(1, "columns")?)?.into())
            }
            "keep" => one(Value::Column(table_ops::keep(
                a.table(0, "table")?,
                a.string(1, "column")?,
            )?)),
            "select" => {
                one(table_ops::select(a.table(0, "table")?, &a.string_list(1, "columns")?)?.into())
            }
            "head" => one(table_ops::head(a.table(0, "table")?, a.count(1, "n")?).into()),
            "columns" => {
                let names = a.table(0, "table")?.column_names();
                one(Value::Scalar(Scalar::List(
                    names
                        .into_iter()
                        .map(|n| Scalar::Str(n.to_string()))
                        .collect(),
                )))
            }
            "count_rows" => one(Value::Scalar(Scalar::Number(
                a.table(0, "table")?.row_count() as f64,
            ))),
            "describe" => one(table_ops::describe(a.table(0, "table")?).into()),
            "histogram" => {
                let table = a.table(0, "table")?;
                let name = a.string(1, "column")?;
                let column = table
                    .column(name)
                    .ok_or_else(|| StdlibError::BadColumn(name.to_string()))?;
                one(Value::Histogram(table_ops::histogram(
                    column,
                    a.count(2, "bins")?,
                )?))
            }
            "column_histogram" => one(Value::Histogram(table_ops::histogram(
                a.column(0, "column")?,
                a.count(1, "bins")?,
            )?)),
            "to_table" => one(Table {
                columns: vec![a.column(0, "column")?.clone()],
            }
            .into()),
            "split" => {
                let (first, second) =
                    table_ops::split(a.table(0, "table")?, a.number(1, "fraction")?)?;
                Ok(vec![first.into(), second.into()])
            }
            "SVC" => one(Value::Model(model::svc(a.number(0, "c")?))),
            "fit" => one(Value::Model(model::fit(
                a.model(0, "model")?,
                a.table(1, "x")?,
                a.column(2, "y")?,
            )?)),
            "predict" => one(Value::Column(model::predict(
                a.model(0, "model")?,
                a.table(1, "x")?,
            )?)),
            "hyperparameters" => one(model::hyperparameters(a.model(0, "model")?).into()),
            "fitted_params" => one(model::fitted_params(a.model(0, "model")?).into()),
            "random_table" => {
                one(
                    table_ops::random_table(a.seed(0)?, a.count(1, "rows")?, a.count(2, "cols")?)
                        .into(),
                )
            }
            "random_numbers" => {
                let t = table_ops::random_table(a.seed(0)?, a.count(1, "n")?, 1);
                let mut col = t.columns.into_iter().next().unwrap_or(Column {
                    name: String::new(),
                    ty: crate::value::ColumnType::Float,
                    cells: Vec::new(),
                });
                col.name = "random".into();
                one(Value::Column(col))
            }
            other => Err(StdlibError::UnknownFunction(other.to_string())),
        }
    }
}

struct Args<'a>(&'a [&'a Value]);

impl<'a> Args<'a> {
    fn get(&self, i: usize, param: &'static str) -> Result<&'a Value, StdlibError> {
        self.0.get(i).copied().ok_or(StdlibError::BadArgument {
            param,
            message: "missing".into(),
        })
    }

    fn mismatch(param: &'static str, expected: &str, found: &Value) -> StdlibError {
        StdlibError::BadArgument {
            param,
            message: format!("expected {expected}, found {}", found.kind()),
        }
    }

    fn table(&self, i: usize, param: &'static str) -> Result<&'a Table, StdlibError> {
        match self.get(i, param)? {
            Value::Table(t) => Ok(t),
            v => Err(Self::mismatch(param, "table", v)),
        }
    }

    fn column(&self, i: usize, param: &'static str) -> Result<&'a Column, StdlibError> {
        match self.get(i, param)? {
            Value::Column(c) => Ok(c),
            v => Err(Self::mismatch(param, "column", v)),
        }
    }

    fn model(&self, i: usize, param: &'static str) -> Result<&'a Model, StdlibError> {
        match self.get(i, param)? {
            Value::Model(m) => Ok(m),
            v => Err(Self::mismatch(param, "model", v)),
        }
    }

    fn number(&self, i: usize, param: &'static str) -> Result<f64, StdlibError> {
        match self.get(i, param)? {
            Value::Scalar(Scalar::Number(n)) => Ok(*n),
            v => Err(Self::mismatch(param, "number", v)),
        }
    }

    /// A non-negative integral number.
    fn count(&self, i: usize, param: &'static str) -> Result<usize, StdlibError> {
        let n = self.number(i, param)?;
        if n < 0.0 || n.fract() != 0.0 || !n.is_finite() || n > 1e9 {
            return Err(StdlibError::BadArgument {
                param,
                message: format!("expected a non-negative integer, found {n}"),
            });
        }
        Ok(n as usize)
    }

    fn seed(&self, i: usize) -> Result<u64, StdlibError> {
        let n = self.number(i, "seed")?;
        if n.fract() != 0.0 || !n.is_finite() {
            return Err(StdlibError::BadArgument {
                param: "seed",
                message: format!("expected an integer, found {n}"),
            });
        }
        Ok(n as i64 as u64)
    }

    fn string(&self, i: usize, param: &'static str) -> Result<&'a str, StdlibError> {
        match self.get(i, param)? {
            Value::Scalar(Scalar::Str(s)) => Ok(s),
            v => Err(Self::mismatch(param, "string", v)),
        }
    }

    fn string_list(&self, i: usize, param: &'static str) -> Result<Vec<String>, StdlibError> {
        match self.get(i, param)? {
            Value::Scalar(Scalar::List(items)) => items
                .iter()
                .map(|s| match s {
                    Scalar::Str(s) => Ok(s.clone()),
                    other => Err(StdlibError::BadArgument {
                        param,
                        message: format!("expected column names, found {other}"),
                    }),
                })
                .collect(),
            v => Err(Self::mismatch(param, "list", v)),
        }
    }
}

pub(crate) fn literal_value(lit: &Literal) -> Value {
    Value::Scalar(Scalar::from(lit))
}
