//! Purity classification of operations and hidden-argument normalization.
//!
//! Purity is declared per function in a data file. A *normalizable*
//! function is impure, but becomes pure when an observable piece of outside
//! state (a file's modification time, a fixed RNG seed) is treated as an
//! extra, hidden argument of the call.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::UNIX_EPOCH;

use serde::{Deserialize, Serialize};

use crate::dsl::{ArgValue, Literal, SignatureLookup};
use crate::error::{Error, Result};
use crate::graph::{DataflowGraph, OpId, ALIAS_CALLEE, LITERAL_CALLEE};
use crate::stdlib::Stdlib;

const DEFAULT_TABLE: &str = include_str!("../data/purity.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenKind {
    FileMtime,
    RngSeed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "purity", rename_all = "snake_case")]
pub enum FunctionPurity {
    Pure,
    Impure,
    Normalizable { rule: HiddenKind, key: String },
}

/// Purity of one graph node after annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodePurity {
    Pure,
    Impure,
    /// Pure once the hidden argument identified by `key` is considered.
    Hidden {
        rule: HiddenKind,
        key: String,
    },
}

impl NodePurity {
    pub fn label(&self) -> &'static str {
        match self {
            NodePurity::Pure => "pure",
            NodePurity::Impure => "impure",
            NodePurity::Hidden { .. } => "pure_hidden",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PurityInfo {
    #[serde(rename = "functions")]
    per_function: BTreeMap<String, FunctionPurity>,
}

impl Default for PurityInfo {
    fn default() -> Self {
        PurityInfo::from_toml(DEFAULT_TABLE).expect("bundled purity table is valid")
    }
}

impl PurityInfo {
    pub fn from_toml(text: &str) -> Result<PurityInfo> {
        toml::from_str(text).map_err(|e| Error::Config {
            what: "purity",
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<PurityInfo> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PurityInfo::from_toml(&text)
    }

    /// Entries of `overrides` replace the existing ones.
    pub fn merge(&mut self, overrides: PurityInfo) {
        self.per_function.extend(overrides.per_function);
    }

    pub fn get(&self, function: &str) -> Option<&FunctionPurity> {
        self.per_function.get(function)
    }

    pub fn functions(&self) -> impl Iterator<Item = (&str, &FunctionPurity)> {
        self.per_function.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone)]
pub struct PurityOptions {
    /// Apply hidden-argument normalization rules.
    pub normalize: bool,
    /// Relative file keys are resolved against this directory.
    pub base_dir: PathBuf,
}

impl Default for PurityOptions {
    fn default() -> Self {
        PurityOptions {
            normalize: true,
            base_dir: PathBuf::from("."),
        }
    }
}

/// Sets the purity of every node. Returns the normalizable nodes that had to
/// stay impure because their key argument is not a literal.
pub fn annotate(
    graph: &mut DataflowGraph,
    info: &PurityInfo,
    options: &PurityOptions,
) -> Result<Vec<OpId>> {
    let mut degraded = Vec::new();
    for node in graph.nodes_mut() {
        let purity = if node.callee == LITERAL_CALLEE || node.callee == ALIAS_CALLEE {
            NodePurity::Pure
        } else {
            match info.get(&node.callee) {
                None => return Err(Error::UnknownPurity(node.callee.clone())),
                Some(FunctionPurity::Pure) => NodePurity::Pure,
                Some(FunctionPurity::Impure) => NodePurity::Impure,
                Some(FunctionPurity::Normalizable { .. }) if !options.normalize => {
                    NodePurity::Impure
                }
                Some(FunctionPurity::Normalizable { rule, key }) => {
                    let position = Stdlib::global()
                        .signature(&node.callee)
                        .and_then(|sig| sig.params.iter().position(|p| p.name == key));
                    match position.and_then(|i| node.args.get(i)) {
                        Some(ArgValue::Lit(lit)) => NodePurity::Hidden {
                            rule: *rule,
                            key: hidden_key(*rule, lit, &options.base_dir),
                        },
                        _ => {
                            degraded.push(node.id.clone());
                            NodePurity::Impure
                        }
                    }
                }
            }
        };
        node.purity = Some(purity);
    }
    Ok(degraded)
}

fn hidden_key(rule: HiddenKind, lit: &Literal, base_dir: &Path) -> String {
    match (rule, lit) {
        (HiddenKind::FileMtime, Literal::Str(path)) => {
            let joined = base_dir.join(path);
            std::path::absolute(&joined)
                .unwrap_or(joined)
                .display()
                .to_string()
        }
        (_, lit) => lit.to_string(),
    }
}

/// An observed hidden-argument value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    File { mtime_ns: u64, size: u64 },
    Missing,
    Seed { value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenArgument {
    pub rule: HiddenKind,
    pub key: String,
    pub observed: Observation,
}

/// Reads the current value of a hidden argument.
pub fn observe(rule: HiddenKind, key: &str) -> HiddenArgument {
    let observed = match rule {
        HiddenKind::FileMtime => match std::fs::metadata(key) {
            Ok(meta) => Observation::File {
                mtime_ns: meta
                    .modified()
                    .ok()
                    .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
                    .map_or(0, |d| u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)),
                size: meta.len(),
            },
            Err(_) => Observation::Missing,
        },
        HiddenKind::RngSeed => Observation::Seed {
            value: key.to_string(),
        },
    };
    HiddenArgument {
        rule,
        key: key.to_string(),
        observed,
    }
}
