use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::Literal;

/// Static type of a variable or parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SemanticType {
    Table,
    Column,
    Model,
    Histogram,
    Number,
    String,
    Bool,
    List,
}

impl SemanticType {
    pub fn of_literal(lit: &Literal) -> SemanticType {
        match lit {
            Literal::Bool(_) => SemanticType::Bool,
            Literal::Number(_) => SemanticType::Number,
            Literal::Str(_) => SemanticType::String,
            Literal::List(_) => SemanticType::List,
        }
    }

    /// Number, string, bool and list values are all shown as scalars.
    pub fn is_scalar(self) -> bool {
        matches!(
            self,
            SemanticType::Number | SemanticType::String | SemanticType::Bool | SemanticType::List
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            SemanticType::Table => "Table",
            SemanticType::Column => "Column",
            SemanticType::Model => "Model",
            SemanticType::Histogram => "Histogram",
            SemanticType::Number => "Number",
            SemanticType::String => "String",
            SemanticType::Bool => "Bool",
            SemanticType::List => "List",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SemanticType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "Table" => SemanticType::Table,
            "Column" => SemanticType::Column,
            "Model" => SemanticType::Model,
            "Histogram" => SemanticType::Histogram,
            "Number" => SemanticType::Number,
            "String" => SemanticType::String,
            "Bool" => SemanticType::Bool,
            "List" => SemanticType::List,
            other => return Err(format!("unknown type `{other}`")),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: &'static str,
    pub ty: SemanticType,
    pub default: Option<Literal>,
}

impl Param {
    pub fn required(name: &'static str, ty: SemanticType) -> Self {
        Param {
            name,
            ty,
            default: None,
        }
    }

    pub fn optional(name: &'static str, ty: SemanticType, default: Literal) -> Self {
        Param {
            name,
            ty,
            default: Some(default),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeSignature {
    pub name: &'static str,
    pub params: Vec<Param>,
    pub returns: Vec<SemanticType>,
}

impl TypeSignature {
    pub fn new(name: &'static str, params: Vec<Param>, returns: Vec<SemanticType>) -> Self {
        TypeSignature {
            name,
            params,
            returns,
        }
    }
}

/// Lookup of function signatures by name.
pub trait SignatureLookup {
    fn signature(&self, name: &str) -> Option<&TypeSignature>;
}
