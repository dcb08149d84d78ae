//! Edit detection, staleness propagation and re-execution planning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::dsl::VarName;
use crate::error::Result;
use crate::graph::{DataflowGraph, OpId, OperationNode};
use crate::planner::ExecutionPlan;
use crate::purity::{observe, NodePurity, Observation};
use crate::session::{Freshness, Session};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EditDiff {
    pub edited: BTreeSet<OpId>,
    pub added: BTreeSet<OpId>,
    pub removed: BTreeSet<OpId>,
}

impl EditDiff {
    pub fn is_empty(&self) -> bool {
        self.edited.is_empty() && self.added.is_empty() && self.removed.is_empty()
    }
}

fn same_operation(a: &OperationNode, b: &OperationNode) -> bool {
    a.signature() == b.signature() && a.outputs == b.outputs
}

/// Compares two versions of a program's graph.
pub fn diff(old: &DataflowGraph, new: &DataflowGraph) -> EditDiff {
    let mut d = EditDiff::default();
    for node in new.nodes() {
        match old.node(&node.id) {
            None => {
                d.added.insert(node.id.clone());
            }
            Some(prev) if !same_operation(prev, node) => {
                d.edited.insert(node.id.clone());
            }
            Some(_) => {}
        }
    }
    for node in old.nodes() {
        if !new.contains(&node.id) {
            d.removed.insert(node.id.clone());
        }
    }
    d
}

/// Compares a graph with what the session last executed.
pub fn diff_session(new: &DataflowGraph, session: &Session) -> EditDiff {
    let mut d = EditDiff::default();
    for node in new.nodes() {
        match session.record(&node.id) {
            None => {
                d.added.insert(node.id.clone());
            }
            Some(r) if r.signature != node.signature() || r.outputs != node.outputs => {
                d.edited.insert(node.id.clone());
            }
            Some(_) => {}
        }
    }
    for id in session.records().keys() {
        if !new.contains(id) {
            d.removed.insert(id.clone());
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StaleReason {
    Edited,
    Added,
    Impure,
    HiddenChanged,
    /// An output has no value in the session.
    Missing,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StalenessMarking {
    pub per_variable: BTreeMap<VarName, Freshness>,
    /// Operations that must run unconditionally, with the first reason found.
    pub forced: BTreeMap<OpId, StaleReason>,
}

impl StalenessMarking {
    pub fn stale(&self) -> BTreeSet<&VarName> {
        self.per_variable
            .iter()
            .filter(|(_, f)| **f == Freshness::PotentiallyStale)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn up_to_date(&self) -> BTreeSet<&VarName> {
        self.per_variable
            .iter()
            .filter(|(_, f)| **f == Freshness::UpToDate)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn is_stale(&self, var: &str) -> bool {
        self.per_variable.get(var) == Some(&Freshness::PotentiallyStale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub op: OpId,
    pub message: String,
}

/// Hidden-argument nodes whose observation no longer matches the one
/// recorded when they last ran.
pub fn changed_hidden(
    graph: &DataflowGraph,
    session: &Session,
) -> (BTreeSet<OpId>, Vec<Diagnostic>) {
    let mut changed = BTreeSet::new();
    let mut diagnostics = Vec::new();
    for node in graph.nodes() {
        let Some(NodePurity::Hidden { rule, key }) = &node.purity else {
            continue;
        };
        let Some(record) = session.record(&node.id) else {
            continue;
        };
        let now = observe(*rule, key);
        if now.observed == Observation::Missing {
            diagnostics.push(Diagnostic {
                op: node.id.clone(),
                message: format!("{key} does not exist"),
            });
        }
        if record.hidden.as_ref() != Some(&now) {
            changed.insert(node.id.clone());
        }
    }
    (changed, diagnostics)
}

/// What seeds a marking besides the edit diff.
#[derive(Debug, Clone, Default)]
pub struct Seeds {
    pub hidden_changed: BTreeSet<OpId>,
    /// Treat every impure node as a source of staleness.
    pub include_impure: bool,
}

/// Forward closure of staleness from edited, added, impure and
/// hidden-changed nodes, plus nodes whose outputs the session lacks and
/// variables the session already holds as potentially stale.
pub fn mark(
    graph: &DataflowGraph,
    diff: &EditDiff,
    session: &Session,
    seeds: &Seeds,
) -> StalenessMarking {
    let mut forced: BTreeMap<OpId, StaleReason> = BTreeMap::new();
    let mut stale_ops: BTreeSet<OpId> = BTreeSet::new();
    for node in graph.nodes() {
        let reason = if diff.edited.contains(&node.id) {
            Some(StaleReason::Edited)
        } else if diff.added.contains(&node.id) {
            Some(StaleReason::Added)
        } else if seeds.include_impure && node.is_impure() {
            Some(StaleReason::Impure)
        } else if seeds.hidden_changed.contains(&node.id) {
            Some(StaleReason::HiddenChanged)
        } else if node
            .outputs
            .iter()
            .any(|o| session.entry(o.as_str()).is_none())
        {
            Some(StaleReason::Missing)
        } else {
            None
        };
        if let Some(r) = reason {
            forced.insert(node.id.clone(), r);
            stale_ops.insert(node.id.clone());
        } else if node
            .outputs
            .iter()
            .any(|o| session.freshness(o.as_str()) == Some(Freshness::PotentiallyStale))
        {
            stale_ops.insert(node.id.clone());
        }
    }

    let mut queue: VecDeque<OpId> = stale_ops.iter().cloned().collect();
    while let Some(id) = queue.pop_front() {
        for next in graph.successors(&id) {
            if stale_ops.insert(next.clone()) {
                queue.push_back(next.clone());
            }
        }
    }

    let mut per_variable = BTreeMap::new();
    for node in graph.nodes() {
        let f = if stale_ops.contains(&node.id) {
            Freshness::PotentiallyStale
        } else {
            Freshness::UpToDate
        };
        for out in &node.outputs {
            per_variable.insert(out.clone(), f);
        }
    }
    StalenessMarking {
        per_variable,
        forced,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Eager,
    #[default]
    Checked,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eager" => Ok(Mode::Eager),
            "checked" => Ok(Mode::Checked),
            other => Err(format!(
                "unknown mode `{other}` (expected eager or checked)"
            )),
        }
    }
}

/// Nodes of `nodes` that may be skipped by the non-staleness check: pure
/// nodes that are not forced and have a memo record from an earlier run.
pub fn conditional_nodes(
    graph: &DataflowGraph,
    nodes: &BTreeSet<OpId>,
    forced: &BTreeMap<OpId, StaleReason>,
    session: &Session,
    mode: Mode,
) -> BTreeSet<OpId> {
    if mode == Mode::Eager {
        return BTreeSet::new();
    }
    nodes
        .iter()
        .filter(|id| {
            let Some(node) = graph.node(id) else {
                return false;
            };
            !node.is_impure()
                && !forced.contains_key(*id)
                && session
                    .record(id)
                    .is_some_and(|r| r.signature == node.signature() && r.outputs == node.outputs)
        })
        .cloned()
        .collect()
}

/// Plan over the producers of every potentially stale variable.
pub fn replan(
    graph: &DataflowGraph,
    marking: &StalenessMarking,
    session: &Session,
    mode: Mode,
) -> Result<ExecutionPlan> {
    let nodes: BTreeSet<OpId> = marking
        .stale()
        .into_iter()
        .filter_map(|v| graph.producer(v.as_str()).cloned())
        .collect();
    let conditional = conditional_nodes(graph, &nodes, &marking.forced, session, mode);
    ExecutionPlan::new(graph, nodes, None, conditional)
}

/// Re-observes hidden arguments; changed ones seed a marking.
pub fn watch_external(
    graph: &DataflowGraph,
    session: &Session,
) -> (StalenessMarking, Vec<Diagnostic>) {
    let (hidden_changed, diagnostics) = changed_hidden(graph, session);
    let seeds = Seeds {
        hidden_changed,
        include_impure: false,
    };
    (
        mark(graph, &EditDiff::default(), session, &seeds),
        diagnostics,
    )
}

#[cfg(test)]
mod tests {
    use std::path::{Path, PathBuf};

    use super::*;
    use crate::dsl::{parse, typecheck};
    use crate::executor::{execute, ExecEvent, ExecOptions};
    use crate::planner::add_order_edges;
    use crate::purity::{annotate, PurityInfo, PurityOptions};
    use crate::stdlib::{CallContext, Stdlib};

    const EXAMPLE: &str = include_str!("../../../samples/titanic.flow");

    fn graph(src: &str, dir: &Path, normalize: bool) -> DataflowGraph {
        let mut g =
            DataflowGraph::build(&typecheck(&parse(src).unwrap(), Stdlib::global()).unwrap());
        let opts = PurityOptions {
            normalize,
            base_dir: dir.to_path_buf(),
        };
        annotate(&mut g, &PurityInfo::default(), &opts).unwrap();
        add_order_edges(&mut g);
        g
    }

    fn workdir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let samples = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples");
        std::fs::copy(samples.join("train.csv"), dir.path().join("train.csv")).unwrap();
        dir
    }

    fn edited_example() -> String {
        EXAMPLE.replace("[\"Survived\"]", "[\"Survived\", \"Name\"]")
    }

    fn run(
        plan: &ExecutionPlan,
        g: &DataflowGraph,
        s: &mut Session,
        dir: &Path,
    ) -> Vec<(String, bool)> {
        let opts = ExecOptions {
            parallel: true,
            context: CallContext::new(dir),
        };
        let report = execute(plan, g, s, &opts, &|_: &ExecEvent| {}).unwrap();
        assert!(report.failure.is_none());
        report
            .log
            .iter()
            .map(|e| (e.op.0.clone(), e.skipped))
            .collect()
    }

    fn warm(dir: &Path, normalize: bool) -> (DataflowGraph, Session) {
        let g = graph(EXAMPLE, dir, normalize);
        let mut s = Session::in_memory();
        run(&ExecutionPlan::for_all(&g).unwrap(), &g, &mut s, dir);
        (g, s)
    }

    fn names(set: BTreeSet<&VarName>) -> Vec<&str> {
        set.into_iter().map(|v| v.as_str()).collect()
    }

    fn ops(v: &[&str]) -> BTreeSet<OpId> {
        v.iter().map(|s| OpId::from(*s)).collect()
    }

    #[test]
    fn drop_edit_is_detected_as_edit_of_x_train() {
        let dir = workdir();
        let old = graph(EXAMPLE, dir.path(), false);
        let new = graph(&edited_example(), dir.path(), false);
        let d = diff(&old, &new);
        assert_eq!(d.edited, ops(&["X_train"]));
        assert!(d.added.is_empty() && d.removed.is_empty());
        assert!(diff(&old, &old).is_empty());
    }

    #[test]
    fn rename_is_remove_plus_add() {
        let dir = workdir();
        let old = graph(EXAMPLE, dir.path(), false);
        let new = graph(
            &EXAMPLE
                .replace("svc = SVC", "model = SVC")
                .replace("(svc,", "(model,"),
            dir.path(),
            false,
        );
        let d = diff(&old, &new);
        assert_eq!(d.removed, ops(&["svc"]));
        assert_eq!(d.added, ops(&["model"]));
        // the consumer now reads a different variable
        assert_eq!(d.edited, ops(&["trained_svc"]));
    }

    #[test]
    fn eager_marking_and_plan_without_normalization() {
        let dir = workdir();
        let (_, s) = warm(dir.path(), false);
        let new = graph(&edited_example(), dir.path(), false);
        let d = diff_session(&new, &s);
        let marking = mark(
            &new,
            &d,
            &s,
            &Seeds {
                include_impure: true,
                ..Seeds::default()
            },
        );
        assert_eq!(
            names(marking.stale()),
            ["X_train", "train_df", "trained_svc", "y_train"]
        );
        assert_eq!(names(marking.up_to_date()), ["svc"]);
        let plan = replan(&new, &marking, &s, Mode::Eager).unwrap();
        assert_eq!(
            plan.levels,
            vec![
                vec![OpId::from("train_df")],
                vec![OpId::from("X_train"), OpId::from("y_train")],
                vec![OpId::from("trained_svc")]
            ]
        );
        assert!(plan.conditional.is_empty());
    }

    #[test]
    fn checked_run_skips_keep_when_the_file_is_unchanged() {
        let dir = workdir();
        let (_, mut s) = warm(dir.path(), false);
        let new = graph(&edited_example(), dir.path(), false);
        let d = diff_session(&new, &s);
        let marking = mark(
            &new,
            &d,
            &s,
            &Seeds {
                include_impure: true,
                ..Seeds::default()
            },
        );
        let plan = replan(&new, &marking, &s, Mode::Checked).unwrap();
        assert_eq!(plan.conditional, ops(&["trained_svc", "y_train"]));
        let y_before = s.digest("y_train").unwrap();
        let log = run(&plan, &new, &mut s, dir.path());
        assert_eq!(
            log,
            [
                ("train_df".to_string(), false),
                ("X_train".to_string(), false),
                ("y_train".to_string(), true),
                ("trained_svc".to_string(), false)
            ]
        );
        assert_eq!(s.digest("y_train").unwrap(), y_before);
        assert!(s.is_up_to_date("y_train"));
    }

    #[test]
    fn normalized_marking_leaves_the_untouched_read_fresh() {
        let dir = workdir();
        let (_, mut s) = warm(dir.path(), true);
        let new = graph(&edited_example(), dir.path(), true);
        let d = diff_session(&new, &s);
        let (hidden_changed, _) = changed_hidden(&new, &s);
        let marking = mark(
            &new,
            &d,
            &s,
            &Seeds {
                hidden_changed,
                include_impure: true,
            },
        );
        assert_eq!(names(marking.stale()), ["X_train", "trained_svc"]);
        let plan = replan(&new, &marking, &s, Mode::Checked).unwrap();
        let log = run(&plan, &new, &mut s, dir.path());
        assert_eq!(
            log,
            [
                ("X_train".to_string(), false),
                ("trained_svc".to_string(), false)
            ]
        );
    }

    #[test]
    fn touched_file_marks_the_whole_downstream() {
        let dir = workdir();
        let (g, mut s) = warm(dir.path(), true);
        let csv = dir.path().join("train.csv");
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.pop();
        std::fs::write(&csv, lines.join("\n") + "\n").unwrap();

        let (marking, diagnostics) = watch_external(&g, &s);
        assert!(diagnostics.is_empty());
        assert_eq!(
            names(marking.stale()),
            ["X_train", "train_df", "trained_svc", "y_train"]
        );
        let plan = replan(&g, &marking, &s, Mode::Checked).unwrap();
        let log = run(&plan, &g, &mut s, dir.path());
        assert!(log.iter().all(|(_, skipped)| !skipped));
        assert_eq!(log.len(), 4);
    }

    #[test]
    fn identical_rewrite_with_new_mtime_is_absorbed() {
        let dir = workdir();
        let (g, mut s) = warm(dir.path(), true);
        let csv = dir.path().join("train.csv");
        let file = std::fs::File::options().write(true).open(&csv).unwrap();
        file.set_modified(std::time::SystemTime::now() + std::time::Duration::from_secs(5))
            .unwrap();
        drop(file);

        let (marking, _) = watch_external(&g, &s);
        assert_eq!(marking.stale().len(), 4);
        let plan = replan(&g, &marking, &s, Mode::Checked).unwrap();
        let log = run(&plan, &g, &mut s, dir.path());
        assert_eq!(
            log,
            [
                ("train_df".to_string(), false),
                ("X_train".to_string(), true),
                ("y_train".to_string(), true),
                ("trained_svc".to_string(), true)
            ]
        );
    }

    #[test]
    fn untouched_files_give_an_empty_marking() {
        let dir = workdir();
        let (g, s) = warm(dir.path(), true);
        let (marking, _) = watch_external(&g, &s);
        assert!(marking.stale().is_empty());
        assert!(replan(&g, &marking, &s, Mode::Checked).unwrap().is_empty());
    }

    #[test]
    fn deleted_file_is_reported() {
        let dir = workdir();
        let (g, s) = warm(dir.path(), true);
        std::fs::remove_file(dir.path().join("train.csv")).unwrap();
        let (marking, diagnostics) = watch_external(&g, &s);
        assert_eq!(diagnostics.len(), 1);
        assert!(marking.is_stale("train_df"));
    }

    #[test]
    fn nothing_stale_without_edits_when_all_pure() {
        let dir = workdir();
        let (g, s) = warm(dir.path(), true);
        let marking = mark(
            &g,
            &diff_session(&g, &s),
            &s,
            &Seeds {
                include_impure: true,
                ..Seeds::default()
            },
        );
        assert!(marking.stale().is_empty());
    }

    #[test]
    fn missing_outputs_are_stale() {
        let dir = workdir();
        let g = graph(EXAMPLE, dir.path(), true);
        let marking = mark(
            &g,
            &EditDiff::default(),
            &Session::in_memory(),
            &Seeds::default(),
        );
        assert_eq!(marking.stale().len(), 5);
    }

    #[test]
    fn edit_reproducing_the_same_output_cuts_off_downstream() {
        let dir = workdir();
        let src = "t = random_table(1, 20, 3)\nh = head(t, 100)\nc = count_rows(h)\n";
        let g = graph(src, dir.path(), true);
        let mut s = Session::in_memory();
        run(&ExecutionPlan::for_all(&g).unwrap(), &g, &mut s, dir.path());
        let new = graph(&src.replace("100", "50"), dir.path(), true);
        let marking = mark(
            &new,
            &diff_session(&new, &s),
            &s,
            &Seeds {
                include_impure: true,
                ..Seeds::default()
            },
        );
        let plan = replan(&new, &marking, &s, Mode::Checked).unwrap();
        let log = run(&plan, &new, &mut s, dir.path());
        assert_eq!(log, [("h".to_string(), false), ("c".to_string(), true)]);
    }
}
