//! The `flowbook` command line.
//!
//! Every command loads a program file into an engine whose session lives in
//! a cache directory next to the file, so consecutive invocations reuse
//! earlier results. Exit codes: 0 on success, 1 for errors in the program or
//! the request, 2 for failures while executing operations.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as JsonValue};

use flowbook_core::executor::ExecutionReport;
use flowbook_core::inspection::parse_arg_text;
use flowbook_core::session::LogEntry;
use flowbook_core::{
    CellRole, DataflowGraph, Engine, EngineOptions, Error, ExecutionPlan, Mode, PurityInfo, Session,
};

mod render;
mod watch;

pub const DEFAULT_PORT: u16 = 7878;

#[derive(Debug, Parser)]
#[command(
    name = "flowbook",
    version,
    about = "Incremental execution of tagged pipeline programs"
)]
pub struct Cli {
    /// Print canonical JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bring every variable up to date and print what ran.
    Run {
        file: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value = "checked", value_parser = parse_mode)]
        mode: Mode,
    },
    /// Show the execution plan for a variable or the whole program.
    Plan {
        file: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Plan against the cached session instead of from scratch.
        #[arg(long)]
        incremental: bool,
        #[arg(long, default_value = "checked", value_parser = parse_mode)]
        mode: Mode,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// List or run the inspection actions of a variable.
    Inspect {
        file: PathBuf,
        #[arg(long = "var")]
        variable: String,
        #[arg(long)]
        action: Option<String>,
        /// Action argument as NAME=VALUE; repeatable.
        #[arg(long = "arg", value_parser = parse_key_value)]
        args: Vec<(String, String)>,
        #[arg(long, default_value = "checked", value_parser = parse_mode)]
        mode: Mode,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Stay resident and re-run whenever the program or its input files change.
    Watch {
        file: PathBuf,
        #[arg(long, default_value = "checked", value_parser = parse_mode)]
        mode: Mode,
        /// Exit after this many updates following the initial run.
        #[arg(long)]
        max_updates: Option<usize>,
        /// Interval for the polling fallback, in milliseconds.
        #[arg(long, default_value_t = 500)]
        poll_ms: u64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Print the data-flow graph.
    Graph {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Serve the HTTP interface for a directory.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = ".")]
        root: PathBuf,
        #[arg(long, default_value_t = 1000)]
        poll_ms: u64,
        #[command(flatten)]
        engine: EngineArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Cell roles to execute, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "pipeline")]
    pub roles: Vec<CellRole>,
    /// Treat functions with hidden inputs as impure.
    #[arg(long)]
    pub no_normalize: bool,
    /// Run each level one operation at a time.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long, env = "FLOWBOOK_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Keep the session in memory only.
    #[arg(long, conflicts_with = "cache_dir")]
    pub no_cache: bool,
    /// Purity table merged over the bundled one.
    #[arg(long)]
    pub purity: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Dot,
    Json,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.to_string()))
        .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))
}

/// Problems with the invocation itself, reported with exit code 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_user_error() => 1,
        _ => 2,
    }
}

fn error_json(err: &anyhow::Error) -> JsonValue {
    match err.downcast_ref::<Error>() {
        Some(e) => e.to_json(),
        None => json!({ "kind": "usage", "message": format!("{err:#}") }),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let json = cli.json;
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            if json {
                let _ = writeln!(out, "{}", json!({ "error": error_json(&e) }));
            }
            let _ = writeln!(err, "error: {e:#}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> anyhow::Result<i32> {
    let json = cli.json;
    match cli.command {
        Command::Run { file, engine, mode } => cmd_run(&file, &engine, mode, json, out),
        Command::Plan {
            file,
            target,
            format,
            incremental,
            mode,
            engine,
        } => {
            let format = if json { Format::Json } else { format };
            cmd_plan(
                &file,
                &engine,
                target.as_deref(),
                incremental.then_some(mode),
                format,
                out,
            )
        }
        Command::Inspect {
            file,
            variable,
            action,
            args,
            mode,
            engine,
        } => cmd_inspect(
            &file,
            &engine,
            &variable,
            action.as_deref(),
            &args,
            mode,
            json,
            out,
        ),
        Command::Watch {
            file,
            mode,
            max_updates,
            poll_ms,
            engine,
        } => {
            let (mut eng, _) = open(&file, &engine, true)?;
            watch::run(
                &mut eng,
                &file,
                watch::WatchOptions {
                    mode,
                    max_updates,
                    poll: std::time::Duration::from_millis(poll_ms.max(10)),
                    json,
                },
                out,
            )
        }
        Command::Graph {
            file,
            format,
            engine,
        } => {
            let format = if json { Format::Json } else { format };
            let (eng, _) = open(&file, &engine, false)?;
            match format {
                Format::Json => print_json(out, &eng.graph().to_json())?,
                Format::Dot => out.write_all(eng.graph().to_dot().as_bytes())?,
                Format::Text => render::graph_text(out, eng.graph())?,
            }
            Ok(0)
        }
        Command::Serve {
            port,
            root,
            poll_ms,
            engine,
        } => cmd_serve(port, &root, poll_ms, &engine, out),
    }
}

fn engine_options(args: &EngineArgs, base_dir: &Path) -> anyhow::Result<EngineOptions> {
    let mut options = EngineOptions {
        roles: args.roles.iter().copied().collect(),
        normalize: !args.no_normalize,
        parallel: !args.sequential,
        base_dir: base_dir.to_path_buf(),
        ..EngineOptions::default()
    };
    if let Some(path) = &args.purity {
        options.purity.merge(PurityInfo::load(path)?);
    }
    Ok(options)
}

fn cache_dir(args: &EngineArgs, base_dir: &Path) -> PathBuf {
    args.cache_dir
        .clone()
        .unwrap_or_else(|| base_dir.join(".flowbook").join("cache"))
}

fn read_source(file: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(file).map_err(|e| usage(format!("cannot read {}: {e}", file.display())))
}

fn base_dir_of(file: &Path) -> PathBuf {
    let dir = file.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    dir.canonicalize().unwrap_or(dir)
}

/// Loads `file` into an engine. With `cached` the session is read from the
/// cache directory; otherwise it starts empty and is never written.
fn open(
    file: &Path,
    args: &EngineArgs,
    cached: bool,
) -> anyhow::Result<(Engine, flowbook_core::EditOutcome)> {
    let source = read_source(file)?;
    let base = base_dir_of(file);
    let session = if cached && !args.no_cache {
        let dir = cache_dir(args, &base);
        Session::open(&dir).with_context(|| format!("opening cache {}", dir.display()))?
    } else {
        Session::in_memory()
    };
    let mut engine = Engine::new(engine_options(args, &base)?, session);
    let outcome = engine.load(&source)?;
    Ok((engine, outcome))
}

fn print_json(out: &mut dyn Write, value: &JsonValue) -> anyhow::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Log entries without wall-clock times, so output is reproducible.
pub fn log_json(graph: &DataflowGraph, log: &[LogEntry]) -> JsonValue {
    log.iter()
        .map(|e| {
            json!({
                "op": e.op,
                "callee": graph.node(&e.op).map(|n| n.callee.as_str()),
                "seq": e.seq,
                "skipped": e.skipped,
            })
        })
        .collect()
}

fn report_json(graph: &DataflowGraph, report: &ExecutionReport) -> JsonValue {
    json!({
        "executed": report.executed(),
        "skipped": report.skipped(),
        "log": log_json(graph, &report.log),
        "failure": report.failure,
    })
}

fn failure_code(report: &ExecutionReport) -> i32 {
    if report.failure.is_some() {
        2
    } else {
        0
    }
}

fn cmd_run(
    file: &Path,
    args: &EngineArgs,
    mode: Mode,
    json: bool,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let (mut engine, load) = open(file, args, true)?;
    let outcome = engine.update(mode, &|_| {})?;
    engine.save()?;
    let graph = engine.graph();
    if json {
        let mut body = report_json(graph, &outcome.report);
        body["mode"] = json!(mode);
        body["diff"] = json!(load.diff);
        body["marking"] = json!(outcome.marking);
        body["plan"] = outcome.plan.to_json(graph);
        body["diagnostics"] = json!(outcome.diagnostics);
        print_json(out, &body)?;
    } else {
        for d in &outcome.diagnostics {
            writeln!(out, "warning: {}: {}", d.op, d.message)?;
        }
        render::log_text(out, graph, &outcome.report.log)?;
        writeln!(
            out,
            "{} executed, {} skipped",
            outcome.report.executed().len(),
            outcome.report.skipped().len()
        )?;
        if let Some(f) = &outcome.report.failure {
            writeln!(out, "failed: {}: {}", f.op, f.error)?;
        }
    }
    Ok(failure_code(&outcome.report))
}

fn cmd_plan(
    file: &Path,
    args: &EngineArgs,
    target: Option<&str>,
    incremental: Option<Mode>,
    format: Format,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let (engine, _) = open(file, args, incremental.is_some())?;
    let plan: ExecutionPlan = match (incremental, target) {
        (None, t) => engine.plan(t)?,
        (Some(mode), None) => engine.preview_update(mode)?,
        (Some(mode), Some(t)) => engine.plan_variable(t, mode)?,
    };
    match format {
        Format::Json => print_json(out, &plan.to_json(engine.graph()))?,
        Format::Dot => out.write_all(plan.to_dot(engine.graph()).as_bytes())?,
        Format::Text => render::plan_text(out, engine.graph(), &plan)?,
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_inspect(
    file: &Path,
    args: &EngineArgs,
    variable: &str,
    action: Option<&str>,
    raw_args: &[(String, String)],
    mode: Mode,
    json: bool,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let (mut engine, _) = open(file, args, true)?;
    let ty = engine
        .compiled()
        .type_of(variable)
        .ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
    let Some(action_id) = action else {
        let actions = engine.options().actions.actions_for(ty);
        if json {
            print_json(
                out,
                &json!({ "variable": variable, "type": ty, "actions": actions }),
            )?;
        } else {
            for a in actions {
                writeln!(out, "{:<22}{}", a.id, a.label)?;
            }
        }
        return Ok(0);
    };

    let spec = engine.options().actions.find(ty, action_id)?.clone();
    let mut bound = BTreeMap::new();
    for (name, text) in raw_args {
        let param = spec
            .params
            .iter()
            .find(|p| &p.name == name)
            .ok_or_else(|| usage(format!("action `{action_id}` has no parameter `{name}`")))?;
        bound.insert(name.clone(), parse_arg_text(name, param.ty, text)?);
    }
    let result = engine.run_action(variable, action_id, &bound, mode, &|_| {});
    engine.save()?;
    let result = result?;
    if json {
        print_json(
            out,
            &json!({
                "variable": result.variable,
                "action_id": result.action_id,
                "render": result.render,
                "payload": result.payload,
                "execution": report_json(engine.graph(), &result.execution),
            }),
        )?;
    } else {
        render::payload_text(out, &result.payload)?;
    }
    Ok(0)
}

fn cmd_serve(
    port: u16,
    root: &Path,
    poll_ms: u64,
    args: &EngineArgs,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let root = root
        .canonicalize()
        .map_err(|e| usage(format!("cannot use {} as root: {e}", root.display())))?;
    let config = flowbook_service::ServiceConfig {
        options: engine_options(args, &root)?,
        cache_dir: (!args.no_cache).then(|| cache_dir(args, &root)),
        poll_interval: (poll_ms > 0).then(|| std::time::Duration::from_millis(poll_ms)),
    };
    let addr = std::net::SocketAddr::from(([127, 0, 0, 1], port));
    writeln!(out, "serving {} on http://{addr}", root.display())?;
    out.flush()?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime
        .block_on(flowbook_service::serve(addr, config))
        .map_err(|e| anyhow!("{e}"))?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(
            std::iter::once("flowbook").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    fn program(dir: &Path, source: &str) -> PathBuf {
        std::fs::write(dir.join("data.csv"), "a,b\n1,x\n2,y\n").unwrap();
        let file = dir.join("p.flow");
        std::fs::write(&file, source).unwrap();
        file
    }

    #[test]
    fn exit_codes_distinguish_user_and_runtime_errors() {
        let dir = tempfile::tempdir().unwrap();
        let bad = program(dir.path(), "#%% [pipeline]\nt = read_csv(\"data.csv\"\n");
        let (code, _, err) = cli(&["run", bad.to_str().unwrap(), "--no-cache"]);
        assert_eq!(code, 1);
        assert!(err.contains("syntax"), "{err}");

        let missing = program(dir.path(), "#%% [pipeline]\nt = read_csv(\"nope.csv\")\n");
        let (code, out, _) = cli(&["run", missing.to_str().unwrap(), "--no-cache", "--json"]);
        assert_eq!(code, 2);
        let v: JsonValue = serde_json::from_str(&out).unwrap();
        assert_eq!(v["failure"]["op"], "t");

        let (code, _, _) = cli(&["run", "/does/not/exist.flow"]);
        assert_eq!(code, 1);
        let (code, _, _) = cli(&["run"]);
        assert_eq!(code, 1);
        let (code, _, _) = cli(&["--help"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn second_run_executes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let file = program(
            dir.path(),
            "#%% [pipeline]\nt = read_csv(\"data.csv\")\nu = drop(t, [\"b\"])\n",
        );
        let f = file.to_str().unwrap();
        let (code, out, _) = cli(&["run", f, "--json"]);
        assert_eq!(code, 0);
        let first: JsonValue = serde_json::from_str(&out).unwrap();
        assert_eq!(first["executed"], json!(["t", "u"]));
        let (_, out, _) = cli(&["run", f, "--json"]);
        let second: JsonValue = serde_json::from_str(&out).unwrap();
        assert_eq!(second["log"], json!([]));
        assert!(dir.path().join(".flowbook/cache/session.json").exists());
    }

    #[test]
    fn json_output_is_canonical() {
        let dir = tempfile::tempdir().unwrap();
        let file = program(
            dir.path(),
            "#%% [pipeline]\nt = read_csv(\"data.csv\")\nu = drop(t, [\"b\"])\n",
        );
        let f = file.to_str().unwrap();
        let a = cli(&["plan", f, "--json"]).1;
        let b = cli(&["plan", f, "--format", "json"]).1;
        assert_eq!(a, b);
        let v: JsonValue = serde_json::from_str(&a).unwrap();
        assert_eq!(serde_json::to_string_pretty(&v).unwrap() + "\n", a);
    }

    #[test]
    fn purity_overrides_are_merged() {
        let dir = tempfile::tempdir().unwrap();
        let file = program(dir.path(), "#%% [pipeline]\nt = read_csv(\"data.csv\")\n");
        let table = dir.path().join("purity.toml");
        std::fs::write(&table, "[functions]\nread_csv = { purity = \"impure\" }\n").unwrap();
        let f = file.to_str().unwrap();
        let p = table.to_str().unwrap();
        let (_, out, _) = cli(&["graph", f, "--purity", p, "--json"]);
        let v: JsonValue = serde_json::from_str(&out).unwrap();
        assert_eq!(v["nodes"][0]["purity"]["kind"], "impure");
        cli(&["run", f, "--purity", p]);
        let (_, out, _) = cli(&["run", f, "--purity", p, "--json"]);
        let v: JsonValue = serde_json::from_str(&out).unwrap();
        assert_eq!(v["executed"], json!(["t"]));
    }

    #[test]
    fn inspect_lists_and_runs_actions() {
        let dir = tempfile::tempdir().unwrap();
        let file = program(dir.path(), "#%% [pipeline]\nt = read_csv(\"data.csv\")\n");
        let f = file.to_str().unwrap();
        let (code, out, _) = cli(&["inspect", f, "--var", "t", "--no-cache"]);
        assert_eq!(code, 0);
        assert!(out.contains("show_dataset"));
        let (code, out, _) = cli(&[
            "inspect",
            f,
            "--var",
            "t",
            "--action",
            "histogram",
            "--arg",
            "column=a",
            "--arg",
            "bins=2",
            "--no-cache",
        ]);
        assert_eq!(code, 0, "{out}");
        assert_eq!(out.lines().count(), 2);
        let (code, _, _) = cli(&[
            "inspect",
            f,
            "--var",
            "t",
            "--action",
            "show_dataset",
            "--arg",
            "x=1",
        ]);
        assert_eq!(code, 1);
        let (code, _, _) = cli(&["inspect", f, "--var", "zz", "--no-cache"]);
        assert_eq!(code, 1);
    }
}
