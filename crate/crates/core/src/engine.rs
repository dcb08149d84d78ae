//! High-level driver tying the pipeline together: compile a source, keep a
//! session in sync with edits and external changes, update, inspect.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::dsl::{parse, typecheck, CellRole, Literal, TypedProgram};
use crate::error::{Error, Result};
use crate::executor::{execute, ExecEvent, ExecOptions, ExecutionReport};
use crate::graph::{DataflowGraph, OpId};
use crate::inspection::{plan_for_variable, render, ActionRegistry, ActionResult, ResultRing};
use crate::planner::{add_order_edges, ExecutionPlan};
use crate::purity::{annotate, HiddenKind, NodePurity, PurityInfo, PurityOptions};
use crate::session::Session;
use crate::staleness::{
    changed_hidden, diff, diff_session, mark, replan, watch_external, Diagnostic, EditDiff, Mode,
    Seeds, StalenessMarking,
};
use crate::stdlib::{CallContext, Stdlib};

#[derive(Debug, Clone)]
pub struct EngineOptions {
    /// Cell roles whose statements are compiled and executed.
    pub roles: BTreeSet<CellRole>,
    pub normalize: bool,
    pub parallel: bool,
    /// Relative file paths in the program resolve against this directory.
    pub base_dir: PathBuf,
    pub purity: PurityInfo,
    pub actions: ActionRegistry,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            roles: BTreeSet::from([CellRole::Pipeline]),
            normalize: true,
            parallel: true,
            base_dir: PathBuf::from("."),
            purity: PurityInfo::default(),
            actions: ActionRegistry::default(),
        }
    }
}

/// A type-checked program and its annotated graph, with order edges.
#[derive(Debug, Clone, Default)]
pub struct Compiled {
    pub program: Option<TypedProgram>,
    pub graph: DataflowGraph,
    /// Normalizable operations kept impure because their key is computed.
    pub degraded: Vec<OpId>,
}

impl Compiled {
    pub fn type_of(&self, var: &str) -> Option<crate::dsl::SemanticType> {
        self.program.as_ref().and_then(|p| p.type_of(var))
    }
}

pub fn compile(source: &str, options: &EngineOptions) -> Result<Compiled> {
    let program = parse(source)?.filter_cells(&options.roles);
    let typed = typecheck(&program, Stdlib::global())?;
    let mut graph = DataflowGraph::build(&typed);
    let purity_options = PurityOptions {
        normalize: options.normalize,
        base_dir: options.base_dir.clone(),
    };
    let degraded = annotate(&mut graph, &options.purity, &purity_options)?;
    add_order_edges(&mut graph);
    Ok(Compiled {
        program: Some(typed),
        graph,
        degraded,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EditOutcome {
    pub version: u64,
    pub diff: EditDiff,
    pub marking: StalenessMarking,
    pub diagnostics: Vec<Diagnostic>,
    pub degraded: Vec<OpId>,
    /// Ids of retained action results that became stale.
    pub stale_results: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct UpdateOutcome {
    pub mode: Mode,
    pub marking: StalenessMarking,
    pub plan: ExecutionPlan,
    pub report: ExecutionReport,
    pub diagnostics: Vec<Diagnostic>,
    pub stale_results: Vec<u64>,
}

pub struct Engine {
    options: EngineOptions,
    session: Session,
    source: String,
    compiled: Compiled,
    loaded: bool,
    version: u64,
    results: ResultRing,
}

fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_micros() as u64)
}

impl Engine {
    pub fn new(options: EngineOptions, session: Session) -> Engine {
        Engine {
            options,
            session,
            source: String::new(),
            compiled: Compiled::default(),
            loaded: false,
            version: 0,
            results: ResultRing::default(),
        }
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn compiled(&self) -> &Compiled {
        &self.compiled
    }

    pub fn graph(&self) -> &DataflowGraph {
        &self.compiled.graph
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn results(&self) -> &ResultRing {
        &self.results
    }

    pub fn save(&self) -> Result<()> {
        self.session.save()
    }

    fn exec_options(&self) -> ExecOptions {
        ExecOptions {
            parallel: self.options.parallel,
            context: CallContext::new(self.options.base_dir.clone()),
        }
    }

    /// Applies a marking to the session and flags affected action results.
    fn apply(&mut self, marking: &StalenessMarking) -> Vec<u64> {
        let stale: Vec<_> = marking.stale().into_iter().cloned().collect();
        self.session.mark_stale(&stale);
        self.results.flag_stale(|v| marking.is_stale(v))
    }

    fn sync(&mut self, include_impure: bool) -> (StalenessMarking, Vec<Diagnostic>) {
        let graph = &self.compiled.graph;
        let d = diff_session(graph, &self.session);
        for id in &d.removed {
            self.session.evict(id);
        }
        self.session.evict_orphans();
        let (hidden_changed, diagnostics) = changed_hidden(graph, &self.session);
        let seeds = Seeds {
            hidden_changed,
            include_impure,
        };
        (mark(graph, &d, &self.session, &seeds), diagnostics)
    }

    /// Replaces the program source. Nothing executes; the returned marking
    /// shows what became potentially stale.
    pub fn load(&mut self, source: &str) -> Result<EditOutcome> {
        let compiled = compile(source, &self.options)?;
        let program_diff = if self.loaded {
            diff(&self.compiled.graph, &compiled.graph)
        } else {
            diff_session(&compiled.graph, &self.session)
        };
        self.compiled = compiled;
        self.source = source.to_string();
        self.loaded = true;
        self.version += 1;

        let (marking, diagnostics) = self.sync(true);
        let stale_results = self.apply(&marking);
        Ok(EditOutcome {
            version: self.version,
            diff: program_diff,
            marking,
            diagnostics,
            degraded: self.compiled.degraded.clone(),
            stale_results,
        })
    }

    /// Brings every potentially stale variable up to date.
    pub fn update(
        &mut self,
        mode: Mode,
        observer: &(dyn Fn(&ExecEvent) + Sync),
    ) -> Result<UpdateOutcome> {
        let (marking, diagnostics) = self.sync(true);
        let stale_results = self.apply(&marking);
        let plan = replan(&self.compiled.graph, &marking, &self.session, mode)?;
        let exec_options = self.exec_options();
        let report = execute(
            &plan,
            &self.compiled.graph,
            &mut self.session,
            &exec_options,
            observer,
        )?;
        Ok(UpdateOutcome {
            mode,
            marking,
            plan,
            report,
            diagnostics,
            stale_results,
        })
    }

    /// The plan an update would execute now, without running it.
    pub fn preview_update(&self, mode: Mode) -> Result<ExecutionPlan> {
        let graph = &self.compiled.graph;
        let d = diff_session(graph, &self.session);
        let (hidden_changed, _) = changed_hidden(graph, &self.session);
        let seeds = Seeds {
            hidden_changed,
            include_impure: true,
        };
        let marking = mark(graph, &d, &self.session, &seeds);
        replan(graph, &marking, &self.session, mode)
    }

    /// Cold plan from an empty session, for one target or the whole program.
    pub fn plan(&self, target: Option<&str>) -> Result<ExecutionPlan> {
        match target {
            Some(t) => ExecutionPlan::for_target(&self.compiled.graph, t),
            None => ExecutionPlan::for_all(&self.compiled.graph),
        }
    }

    /// Plan that would bring `variable` up to date given the session.
    pub fn plan_variable(&self, variable: &str, mode: Mode) -> Result<ExecutionPlan> {
        plan_for_variable(
            &self.compiled.graph,
            variable,
            &self.session,
            &BTreeMap::new(),
            mode,
        )
    }

    /// Re-observes hidden arguments and marks what they invalidate.
    pub fn refresh_external(&mut self) -> (StalenessMarking, Vec<Diagnostic>, Vec<u64>) {
        let (marking, diagnostics) = watch_external(&self.compiled.graph, &self.session);
        let flagged = self.apply(&marking);
        (marking, diagnostics, flagged)
    }

    /// Files read through modification-time hidden arguments.
    pub fn watched_paths(&self) -> Vec<PathBuf> {
        let mut paths: Vec<PathBuf> = self
            .compiled
            .graph
            .nodes()
            .iter()
            .filter_map(|n| match &n.purity {
                Some(NodePurity::Hidden {
                    rule: HiddenKind::FileMtime,
                    key,
                }) => Some(PathBuf::from(key)),
                _ => None,
            })
            .collect();
        paths.sort();
        paths.dedup();
        paths
    }

    /// Computes `variable` through a pruned plan and applies an inspection
    /// action to its value. The program is never modified.
    pub fn run_action(
        &mut self,
        variable: &str,
        action_id: &str,
        args: &BTreeMap<String, Literal>,
        mode: Mode,
        observer: &(dyn Fn(&ExecEvent) + Sync),
    ) -> Result<ActionResult> {
        let ty = self
            .compiled
            .type_of(variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
        let action = self.options.actions.find(ty, action_id)?.clone();
        let bound = action.bind(args)?;

        let (marking, _) = self.sync(false);
        self.apply(&marking);
        let plan = plan_for_variable(
            &self.compiled.graph,
            variable,
            &self.session,
            &marking.forced,
            mode,
        )?;
        let exec_options = self.exec_options();
        let report = execute(
            &plan,
            &self.compiled.graph,
            &mut self.session,
            &exec_options,
            observer,
        )?
        .into_result()?;
        let value = self.session.value(variable)?;
        let payload = render(&action, &value, &bound)?;
        let result = ActionResult {
            id: 0,
            variable: variable.to_string(),
            action_id: action.id.clone(),
            render: action.render,
            payload,
            produced_at: now_us(),
            stale: false,
            execution: report,
        };
        Ok(self.results.push(result).clone())
    }
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::session::Freshness;

    const EXAMPLE: &str = include_str!("../../../samples/titanic.flow");
    const TAGGED: &str = include_str!("../../../samples/titanic_tagged.flow");

    fn engine(dir: &Path, normalize: bool) -> Engine {
        let samples = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../samples");
        std::fs::copy(samples.join("train.csv"), dir.join("train.csv")).unwrap();
        let options = EngineOptions {
            normalize,
            base_dir: dir.to_path_buf(),
            ..EngineOptions::default()
        };
        Engine::new(options, Session::in_memory())
    }

    fn quiet(_: &ExecEvent) {}

    fn ops(report: &ExecutionReport) -> Vec<(&str, bool)> {
        report
            .log
            .iter()
            .map(|e| (e.op.as_str(), e.skipped))
            .collect()
    }

    #[test]
    fn second_update_does_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        let first = e.update(Mode::Checked, &quiet).unwrap();
        assert_eq!(first.report.executed().len(), 5);
        let second = e.update(Mode::Checked, &quiet).unwrap();
        assert!(second.plan.is_empty());
        assert!(second.report.log.is_empty());
    }

    #[test]
    fn edit_marks_the_four_variables_without_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), false);
        e.load(EXAMPLE).unwrap();
        e.update(Mode::Checked, &quiet).unwrap();
        let out = e
            .load(&EXAMPLE.replace("[\"Survived\"]", "[\"Survived\", \"Name\"]"))
            .unwrap();
        assert_eq!(out.diff.edited, BTreeSet::from([OpId::from("X_train")]));
        let stale: Vec<&str> = out.marking.stale().iter().map(|v| v.as_str()).collect();
        assert_eq!(stale, ["X_train", "train_df", "trained_svc", "y_train"]);
        assert_eq!(e.session().freshness("svc"), Some(Freshness::UpToDate));
        let update = e.update(Mode::Checked, &quiet).unwrap();
        assert_eq!(
            ops(&update.report),
            [
                ("train_df", false),
                ("X_train", false),
                ("y_train", true),
                ("trained_svc", false)
            ]
        );
    }

    #[test]
    fn inspection_cells_run_only_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(TAGGED).unwrap();
        assert!(e.graph().producer("preview").is_none());

        let dir2 = tempfile::tempdir().unwrap();
        let mut all = engine(dir2.path(), true);
        all.options.roles = CellRole::all();
        all.load(TAGGED).unwrap();
        assert!(all.graph().producer("preview").is_some());
    }

    #[test]
    fn show_dataset_on_x_train_runs_two_operations_then_none() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        let r = e
            .run_action(
                "X_train",
                "show_dataset",
                &BTreeMap::new(),
                Mode::Checked,
                &quiet,
            )
            .unwrap();
        assert_eq!(ops(&r.execution), [("train_df", false), ("X_train", false)]);
        assert!(matches!(r.payload, crate::value::Value::Table(_)));
        let again = e
            .run_action(
                "X_train",
                "show_dataset",
                &BTreeMap::new(),
                Mode::Checked,
                &quiet,
            )
            .unwrap();
        assert!(again.execution.log.is_empty());
        assert_eq!(again.payload, r.payload);
        assert_eq!(e.results().len(), 2);
    }

    #[test]
    fn list_columns_includes_the_target_attribute() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        let r = e
            .run_action(
                "train_df",
                "list_columns",
                &BTreeMap::new(),
                Mode::Checked,
                &quiet,
            )
            .unwrap();
        let crate::value::Value::Scalar(crate::value::Scalar::List(cols)) = r.payload else {
            panic!("expected a list");
        };
        assert!(cols.iter().any(|c| c.to_string() == "Survived"));
    }

    #[test]
    fn action_results_go_stale_after_an_edit() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        e.run_action(
            "X_train",
            "show_dataset",
            &BTreeMap::new(),
            Mode::Checked,
            &quiet,
        )
        .unwrap();
        e.run_action(
            "svc",
            "show_hyperparameters",
            &BTreeMap::new(),
            Mode::Checked,
            &quiet,
        )
        .unwrap();
        let out = e
            .load(&EXAMPLE.replace("[\"Survived\"]", "[\"Survived\", \"Name\"]"))
            .unwrap();
        assert_eq!(out.stale_results, [0]);
        let flags: Vec<bool> = e.results().iter().map(|r| r.stale).collect();
        assert_eq!(flags, [true, false]);
    }

    #[test]
    fn action_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        let none = BTreeMap::new();
        assert!(matches!(
            e.run_action("nope", "show_dataset", &none, Mode::Checked, &quiet),
            Err(Error::UnknownVariable(_))
        ));
        assert!(matches!(
            e.run_action("svc", "show_dataset", &none, Mode::Checked, &quiet),
            Err(Error::ActionNotApplicable { .. })
        ));
        std::fs::remove_file(dir.path().join("train.csv")).unwrap();
        assert!(matches!(
            e.run_action("X_train", "show_dataset", &none, Mode::Checked, &quiet),
            Err(Error::Runtime { .. })
        ));
    }

    #[test]
    fn removed_statements_are_evicted() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        e.update(Mode::Checked, &quiet).unwrap();
        let trimmed = EXAMPLE.replace("trained_svc = fit(svc, X_train, y_train)", "");
        let out = e.load(&trimmed).unwrap();
        assert_eq!(
            out.diff.removed,
            BTreeSet::from([OpId::from("trained_svc")])
        );
        assert!(e.session().entry("trained_svc").is_none());
        assert!(e
            .update(Mode::Checked, &quiet)
            .unwrap()
            .report
            .log
            .is_empty());
    }

    #[test]
    fn failed_load_keeps_the_previous_program() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        assert!(e.load("x = nope(1)").is_err());
        assert_eq!(e.graph().len(), 5);
        assert_eq!(e.version(), 1);
    }

    #[test]
    fn watched_paths_are_absolute_csv_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut e = engine(dir.path(), true);
        e.load(EXAMPLE).unwrap();
        let paths = e.watched_paths();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].is_absolute() && paths[0].ends_with("train.csv"));
    }
}
