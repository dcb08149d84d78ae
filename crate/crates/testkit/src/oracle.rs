//! Reference semantics: evaluate every statement top to bottom with no
//! planning, caching or staleness tracking.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use flowbook_core::dsl::{parse, typecheck, CellRole, Operation, VarName};
use flowbook_core::stdlib::{CallContext, Stdlib};
use flowbook_core::value::{Scalar, Value};
use flowbook_core::{fingerprint, Fingerprint};

pub fn interpret(
    source: &str,
    base_dir: &Path,
    roles: &BTreeSet<CellRole>,
) -> Result<BTreeMap<VarName, Value>, String> {
    let program = parse(source)
        .map_err(|e| e.to_string())?
        .filter_cells(roles);
    let typed = typecheck(&program, Stdlib::global()).map_err(|e| e.to_string())?;
    let ctx = CallContext::new(base_dir);
    let mut env: BTreeMap<VarName, Value> = BTreeMap::new();
    for stmt in &typed.statements {
        let outputs = match &stmt.op {
            Operation::Literal(lit) => vec![Value::Scalar(Scalar::from(lit))],
            Operation::Alias(v) => vec![env[v].clone()],
            Operation::Call { callee, args } => {
                let values: Vec<Value> = args
                    .iter()
                    .map(|a| match a {
                        flowbook_core::dsl::ArgValue::Lit(l) => Value::Scalar(Scalar::from(l)),
                        flowbook_core::dsl::ArgValue::Var(v) => env[v].clone(),
                    })
                    .collect();
                let refs: Vec<&Value> = values.iter().collect();
                Stdlib::global()
                    .call(callee, &refs, &ctx)
                    .map_err(|e| format!("{}: {e}", stmt.targets[0]))?
            }
        };
        for (t, v) in stmt.targets.iter().zip(outputs) {
            env.insert(t.clone(), v);
        }
    }
    Ok(env)
}

/// Fingerprint of every variable after a naive sequential run.
pub fn fingerprints(
    source: &str,
    base_dir: &Path,
    roles: &BTreeSet<CellRole>,
) -> Result<BTreeMap<VarName, Fingerprint>, String> {
    Ok(interpret(source, base_dir, roles)?
        .into_iter()
        .map(|(k, v)| (k, fingerprint(&v)))
        .collect())
}
