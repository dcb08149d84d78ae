use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::ast::{ArgValue, Expr, Literal, Program, VarName};
use super::types::{SemanticType, SignatureLookup};
use crate::error::{Error, Result};

/// The resolved form of a statement's right-hand side.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    /// Standard-library call with one argument per declared parameter,
    /// defaults filled in.
    Call {
        callee: String,
        args: Vec<ArgValue>,
    },
    Literal(Literal),
    Alias(VarName),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypedStatement {
    pub textual_index: usize,
    pub targets: Vec<VarName>,
    pub op: Operation,
}

#[derive(Debug, Clone)]
pub struct TypedProgram {
    pub program: Program,
    /// Statements in textual order.
    pub statements: Vec<TypedStatement>,
    pub types: BTreeMap<VarName, SemanticType>,
}

impl TypedProgram {
    pub fn type_of(&self, var: &str) -> Option<SemanticType> {
        self.types.get(var).copied()
    }

    pub fn producer_of(&self, var: &str) -> Option<&TypedStatement> {
        self.statements
            .iter()
            .find(|s| s.targets.iter().any(|t| t.as_str() == var))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeError {
    pub textual_index: usize,
    pub line: usize,
    pub kind: TypeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TypeErrorKind {
    UnknownFunction {
        name: String,
    },
    UndefinedVariable {
        name: String,
    },
    Arity {
        callee: String,
        message: String,
    },
    ArgumentType {
        callee: String,
        param: String,
        expected: SemanticType,
        found: SemanticType,
    },
    TargetCount {
        callee: String,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "statement {} (line {}): ", self.textual_index, self.line)?;
        match &self.kind {
            TypeErrorKind::UnknownFunction { name } => write!(f, "unknown function `{name}`"),
            TypeErrorKind::UndefinedVariable { name } => write!(f, "undefined variable {name}"),
            TypeErrorKind::Arity { callee, message } => write!(f, "`{callee}`: {message}"),
            TypeErrorKind::ArgumentType {
                callee,
                param,
                expected,
                found,
            } => write!(
                f,
                "`{callee}` expects {expected} for `{param}`, found {found}"
            ),
            TypeErrorKind::TargetCount {
                callee,
                expected,
                found,
            } => write!(
                f,
                "`{callee}` returns {expected} value(s) but {found} target(s) are assigned"
            ),
        }
    }
}

/// Infers the type of every variable in one forward pass over the
/// statements. Errors are collected for all statements; a failed statement's
/// targets are left untyped so that dependents do not cascade.
pub fn typecheck(program: &Program, registry: &dyn SignatureLookup) -> Result<TypedProgram> {
    let mut types: BTreeMap<VarName, SemanticType> = BTreeMap::new();
    let mut failed: HashSet<VarName> = HashSet::new();
    let mut errors = Vec::new();
    let mut statements = Vec::new();

    for stmt in program.statements() {
        let err = |kind| TypeError {
            textual_index: stmt.textual_index,
            line: stmt.line,
            kind,
        };
        // Dependents of an already failed statement are skipped silently.
        if stmt
            .expr
            .referenced_vars()
            .iter()
            .any(|v| failed.contains(*v))
        {
            failed.extend(stmt.targets.iter().cloned());
            continue;
        }
        let undefined: Vec<&VarName> = stmt
            .expr
            .referenced_vars()
            .into_iter()
            .filter(|v| !types.contains_key(*v))
            .collect();
        if let Some(v) = undefined.first() {
            errors.push(err(TypeErrorKind::UndefinedVariable {
                name: v.to_string(),
            }));
            failed.extend(stmt.targets.iter().cloned());
            continue;
        }

        let resolved = match &stmt.expr {
            Expr::Literal(lit) => Ok((
                Operation::Literal(lit.clone()),
                vec![SemanticType::of_literal(lit)],
            )),
            Expr::Var(v) => Ok((Operation::Alias(v.clone()), vec![types[v]])),
            Expr::Call {
                callee,
                receiver,
                args,
            } => bind_call(callee, receiver.as_ref(), args, registry, &types),
        };
        match resolved {
            Ok((op, returns)) => {
                if returns.len() != stmt.targets.len() {
                    let callee = match &op {
                        Operation::Call { callee, .. } => callee.clone(),
                        _ => "<expression>".to_string(),
                    };
                    errors.push(err(TypeErrorKind::TargetCount {
                        callee,
                        expected: returns.len(),
                        found: stmt.targets.len(),
                    }));
                    failed.extend(stmt.targets.iter().cloned());
                    continue;
                }
                for (target, ty) in stmt.targets.iter().zip(returns) {
                    types.insert(target.clone(), ty);
                }
                statements.push(TypedStatement {
                    textual_index: stmt.textual_index,
                    targets: stmt.targets.clone(),
                    op,
                });
            }
            Err(kind) => {
                errors.push(err(kind));
                failed.extend(stmt.targets.iter().cloned());
            }
        }
    }

    if errors.is_empty() {
        Ok(TypedProgram {
            program: program.clone(),
            statements,
            types,
        })
    } else {
        Err(Error::Type(errors))
    }
}

fn bind_call(
    callee: &str,
    receiver: Option<&VarName>,
    args: &[super::ast::Arg],
    registry: &dyn SignatureLookup,
    types: &BTreeMap<VarName, SemanticType>,
) -> std::result::Result<(Operation, Vec<SemanticType>), TypeErrorKind> {
    let Some(sig) = registry.signature(callee) else {
        return Err(TypeErrorKind::UnknownFunction {
            name: callee.to_string(),
        });
    };
    let arity = |message: String| TypeErrorKind::Arity {
        callee: callee.to_string(),
        message,
    };

    let mut slots: Vec<Option<ArgValue>> = vec![None; sig.params.len()];
    let mut positional = 0;
    let receiver_arg = receiver.map(|r| super::ast::Arg {
        name: None,
        value: ArgValue::Var(r.clone()),
    });
    let mut seen_named = false;
    for arg in receiver_arg.iter().chain(args) {
        let slot = match &arg.name {
            Some(name) => {
                seen_named = true;
                sig.params
                    .iter()
                    .position(|p| p.name == name)
                    .ok_or_else(|| arity(format!("no parameter named `{name}`")))?
            }
            None => {
                if seen_named {
                    return Err(arity("positional argument after keyword argument".into()));
                }
                positional += 1;
                positional - 1
            }
        };
        if slot >= slots.len() {
            return Err(arity(format!(
                "takes {} argument(s) but more were given",
                sig.params.len()
            )));
        }
        if slots[slot].is_some() {
            return Err(arity(format!(
                "argument `{}` given more than once",
                sig.params[slot].name
            )));
        }
        slots[slot] = Some(arg.value.clone());
    }

    let mut bound = Vec::with_capacity(slots.len());
    for (param, slot) in sig.params.iter().zip(slots) {
        let value = match (slot, &param.default) {
            (Some(v), _) => v,
            (None, Some(default)) => ArgValue::Lit(default.clone()),
            (None, None) => {
                return Err(arity(format!("missing argument `{}`", param.name)));
            }
        };
        let found = match &value {
            ArgValue::Lit(lit) => SemanticType::of_literal(lit),
            ArgValue::Var(v) => types[v],
        };
        if found != param.ty {
            return Err(TypeErrorKind::ArgumentType {
                callee: callee.to_string(),
                param: param.name.to_string(),
                expected: param.ty,
                found,
            });
        }
        bound.push(value);
    }

    Ok((
        Operation::Call {
            callee: callee.to_string(),
            args: bound,
        },
        sig.returns.clone(),
    ))
}
