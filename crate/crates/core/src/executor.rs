//! Level-by-level plan execution against a session.
//!
//! Members of one level are independent, so they may run concurrently. Their
//! results are committed to the session in textual order after the whole
//! level finished, which keeps the log and the session deterministic.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::{ArgValue, VarName};
use crate::error::{Error, Result, StdlibError};
use crate::fingerprint::Fingerprint;
use crate::graph::{DataflowGraph, OpId, OperationNode, ALIAS_CALLEE, LITERAL_CALLEE};
use crate::planner::ExecutionPlan;
use crate::purity::{observe, HiddenArgument, NodePurity};
use crate::session::{LogEntry, NodeRecord, Session};
use crate::stdlib::{literal_value, CallContext, Stdlib};
use crate::value::Value;

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub parallel: bool,
    pub context: CallContext,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            parallel: true,
            context: CallContext::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum ExecEvent {
    Started { op: OpId },
    Finished { op: OpId, seq: u64 },
    Skipped { op: OpId, seq: u64 },
    Failed { op: OpId, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub op: OpId,
    pub error: String,
    #[serde(skip)]
    pub source: StdlibError,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExecutionReport {
    pub log: Vec<LogEntry>,
    pub failure: Option<Failure>,
}

impl ExecutionReport {
    pub fn executed(&self) -> Vec<&OpId> {
        self.log
            .iter()
            .filter(|e| !e.skipped)
            .map(|e| &e.op)
            .collect()
    }

    pub fn skipped(&self) -> Vec<&OpId> {
        self.log
            .iter()
            .filter(|e| e.skipped)
            .map(|e| &e.op)
            .collect()
    }

    pub fn into_result(self) -> Result<ExecutionReport> {
        match self.failure {
            Some(f) => Err(Error::Runtime {
                op: f.op,
                source: f.source,
            }),
            None => Ok(self),
        }
    }
}

enum Outcome {
    Skipped,
    Ran {
        outputs: Vec<Value>,
        inputs: Vec<(VarName, Fingerprint)>,
        hidden: Option<HiddenArgument>,
    },
    Failed(StdlibError),
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}

/// Runs `plan` and commits its outputs. Execution halts after the first
/// level that contains a failing operation; the failure is reported in
/// the returned report and outputs of unexecuted nodes keep their freshness.
pub fn execute(
    plan: &ExecutionPlan,
    graph: &DataflowGraph,
    session: &mut Session,
    options: &ExecOptions,
    observer: &(dyn Fn(&ExecEvent) + Sync),
) -> Result<ExecutionReport> {
    let mut report = ExecutionReport::default();
    for level in &plan.levels {
        let nodes: Vec<&OperationNode> = level
            .iter()
            .map(|id| {
                graph
                    .node(id)
                    .ok_or_else(|| Error::UnknownVariable(id.to_string()))
            })
            .collect::<Result<_>>()?;
        let run = |node: &&OperationNode| -> Result<(u64, Outcome)> {
            let conditional = plan.conditional.contains(&node.id);
            let started = now_us();
            let outcome = run_node(node, conditional, session, options, observer)?;
            Ok((started, outcome))
        };
        let outcomes: Vec<(u64, Outcome)> = if options.parallel && nodes.len() > 1 {
            nodes.par_iter().map(run).collect::<Result<_>>()?
        } else {
            nodes.iter().map(run).collect::<Result<_>>()?
        };

        for (node, (started, outcome)) in nodes.iter().zip(outcomes) {
            match outcome {
                Outcome::Skipped => {
                    for out in &node.outputs {
                        session.mark_fresh(out);
                    }
                    let entry = session.append_log(node.id.clone(), started, true);
                    observer(&ExecEvent::Skipped {
                        op: node.id.clone(),
                        seq: entry.seq,
                    });
                    report.log.push(entry);
                }
                Outcome::Ran {
                    outputs,
                    inputs,
                    hidden,
                } => {
                    for (var, value) in node.outputs.iter().zip(outputs) {
                        let (digest, _) = session.store().put(value)?;
                        session.set_output(var.clone(), digest);
                    }
                    session.set_record(
                        node.id.clone(),
                        NodeRecord {
                            signature: node.signature(),
                            outputs: node.outputs.clone(),
                            inputs,
                            hidden,
                        },
                    );
                    let entry = session.append_log(node.id.clone(), started, false);
                    observer(&ExecEvent::Finished {
                        op: node.id.clone(),
                        seq: entry.seq,
                    });
                    report.log.push(entry);
                }
                Outcome::Failed(source) => {
                    observer(&ExecEvent::Failed {
                        op: node.id.clone(),
                        message: source.to_string(),
                    });
                    if report.failure.is_none() {
                        report.failure = Some(Failure {
                            op: node.id.clone(),
                            error: source.to_string(),
                            source,
                        });
                    }
                }
            }
        }
        if report.failure.is_some() {
            break;
        }
    }
    Ok(report)
}

fn run_node(
    node: &OperationNode,
    conditional: bool,
    session: &Session,
    options: &ExecOptions,
    observer: &(dyn Fn(&ExecEvent) + Sync),
) -> Result<Outcome> {
    let mut inputs = Vec::new();
    for var in node.input_vars() {
        if !session.is_up_to_date(var.as_str()) {
            return Err(Error::MissingValue(var.to_string()));
        }
        let digest = session.digest(var.as_str()).expect("up-to-date entry");
        inputs.push((var.clone(), digest));
    }
    let hidden = match &node.purity {
        Some(NodePurity::Hidden { rule, key }) => Some(observe(*rule, key)),
        _ => None,
    };

    if conditional && memo_matches(node, &inputs, &hidden, session) {
        return Ok(Outcome::Skipped);
    }

    observer(&ExecEvent::Started {
        op: node.id.clone(),
    });
    let mut values: Vec<Arc<Value>> = Vec::new();
    for arg in &node.args {
        values.push(match arg {
            ArgValue::Lit(lit) => Arc::new(literal_value(lit)),
            ArgValue::Var(v) => session.value(v.as_str())?,
        });
    }
    let result = match node.callee.as_str() {
        LITERAL_CALLEE | ALIAS_CALLEE => Ok(vec![(*values[0]).clone()]),
        callee => {
            let refs: Vec<&Value> = values.iter().map(|v| v.as_ref()).collect();
            Stdlib::global().call(callee, &refs, &options.context)
        }
    };
    Ok(match result {
        Ok(outputs) if outputs.len() == node.outputs.len() => Outcome::Ran {
            outputs,
            inputs,
            hidden,
        },
        Ok(outputs) => Outcome::Failed(StdlibError::BadArgument {
            param: "targets",
            message: format!(
                "{} returned {} values for {} targets",
                node.callee,
                outputs.len(),
                node.outputs.len()
            ),
        }),
        Err(e) => Outcome::Failed(e),
    })
}

/// The non-staleness check: same operation, same input digests, same hidden
/// observation, and all cached outputs still available.
fn memo_matches(
    node: &OperationNode,
    inputs: &[(VarName, Fingerprint)],
    hidden: &Option<HiddenArgument>,
    session: &Session,
) -> bool {
    let Some(record) = session.record(&node.id) else {
        return false;
    };
    record.signature == node.signature()
        && record.outputs == node.outputs
        && record.inputs == inputs
        && record.hidden == *hidden
        && node.outputs.iter().all(|out| {
            session
                .digest(out.as_str())
                .is_some_and(|d| session.store().contains(&d))
        })
}
