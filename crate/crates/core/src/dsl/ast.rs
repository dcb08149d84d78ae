use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Name of a program variable. Variables are assigned exactly once.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarName(pub String);

impl VarName {
    pub fn new(name: impl Into<String>) -> Self {
        VarName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VarName {
    fn from(s: &str) -> Self {
        VarName(s.to_string())
    }
}

impl std::borrow::Borrow<str> for VarName {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellRole {
    Pipeline,
    Inspection,
    Text,
}

impl CellRole {
    pub const ALL: [CellRole; 3] = [CellRole::Pipeline, CellRole::Inspection, CellRole::Text];

    pub fn as_str(self) -> &'static str {
        match self {
            CellRole::Pipeline => "pipeline",
            CellRole::Inspection => "inspection",
            CellRole::Text => "text",
        }
    }

    pub fn all() -> BTreeSet<CellRole> {
        Self::ALL.into_iter().collect()
    }
}

impl std::str::FromStr for CellRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "pipeline" => Ok(CellRole::Pipeline),
            "inspection" => Ok(CellRole::Inspection),
            "text" => Ok(CellRole::Text),
            other => Err(format!("unknown cell role `{other}`")),
        }
    }
}

impl fmt::Display for CellRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Bool(bool),
    Number(f64),
    Str(String),
    List(Vec<Literal>),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => write!(f, "{}", quote(s)),
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgValue {
    Lit(Literal),
    Var(VarName),
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArgValue::Lit(l) => write!(f, "{l}"),
            ArgValue::Var(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arg {
    pub name: Option<String>,
    pub value: ArgValue,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Call {
        callee: String,
        receiver: Option<VarName>,
        args: Vec<Arg>,
    },
    Literal(Literal),
    Var(VarName),
}

impl Expr {
    /// Variables read by this expression, in source order.
    pub fn referenced_vars(&self) -> Vec<&VarName> {
        match self {
            Expr::Call { receiver, args, .. } => receiver
                .iter()
                .chain(args.iter().filter_map(|a| match &a.value {
                    ArgValue::Var(v) => Some(v),
                    ArgValue::Lit(_) => None,
                }))
                .collect(),
            Expr::Literal(_) => Vec::new(),
            Expr::Var(v) => vec![v],
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Call {
                callee,
                receiver,
                args,
            } => {
                if let Some(r) = receiver {
                    write!(f, "{r}.")?;
                }
                write!(f, "{callee}(")?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    if let Some(name) = &arg.name {
                        write!(f, "{name}=")?;
                    }
                    write!(f, "{}", arg.value)?;
                }
                f.write_str(")")
            }
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Var(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Statement {
    pub targets: Vec<VarName>,
    pub expr: Expr,
    /// Position of the statement among all statements of the document.
    pub textual_index: usize,
    /// 1-based source line.
    pub line: usize,
}

impl Statement {
    fn same_structure(&self, other: &Statement) -> bool {
        self.targets == other.targets
            && self.expr == other.expr
            && self.textual_index == other.textual_index
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let targets: Vec<&str> = self.targets.iter().map(VarName::as_str).collect();
        write!(f, "{} = {}", targets.join(", "), self.expr)
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub index: usize,
    pub role: CellRole,
    pub statements: Vec<Statement>,
    pub raw_text: String,
    /// 1-based line of the first content line.
    pub line: usize,
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub cells: Vec<Cell>,
}

impl Program {
    pub fn statements(&self) -> impl Iterator<Item = &Statement> {
        self.cells.iter().flat_map(|c| c.statements.iter())
    }

    /// Structural equality: roles, statements and text-cell contents. Source
    /// positions and code-cell formatting are ignored.
    pub fn structurally_eq(&self, other: &Program) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| {
                a.index == b.index
                    && a.role == b.role
                    && (a.role != CellRole::Text || a.raw_text == b.raw_text)
                    && a.statements.len() == b.statements.len()
                    && a.statements
                        .iter()
                        .zip(&b.statements)
                        .all(|(x, y)| x.same_structure(y))
            })
    }

    /// Canonical source rendering; parsing it yields a structurally equal
    /// program.
    pub fn pretty(&self) -> String {
        let mut out = String::new();
        for cell in &self.cells {
            out.push_str(&format!("#%% [{}]\n", cell.role));
            if cell.role == CellRole::Text {
                if !cell.raw_text.is_empty() {
                    out.push_str(&cell.raw_text);
                    out.push('\n');
                }
            } else {
                for stmt in &cell.statements {
                    out.push_str(&stmt.to_string());
                    out.push('\n');
                }
            }
        }
        out
    }

    /// Restricts the program to cells whose role is in `visible`. Statement
    /// indices and cell indices keep their original values.
    pub fn filter_cells(&self, visible: &BTreeSet<CellRole>) -> Program {
        Program {
            cells: self
                .cells
                .iter()
                .filter(|c| visible.contains(&c.role))
                .cloned()
                .collect(),
        }
    }
}
