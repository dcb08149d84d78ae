//! Resident mode: re-run after changes to the program or its input files.
//!
//! File-system notifications only wake the loop early; every wake-up (and
//! every poll interval) re-reads the program and re-observes input files, so
//! missed or coalesced notifications are harmless.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Duration;

use notify::{RecommendedWatcher, RecursiveMode, Watcher};
use serde_json::json;

use flowbook_core::{Engine, Mode};

use crate::{exit_code, log_json, render};

pub struct WatchOptions {
    pub mode: Mode,
    pub max_updates: Option<usize>,
    pub poll: Duration,
    pub json: bool,
}

struct Notifier {
    watcher: Option<RecommendedWatcher>,
    watched: BTreeSet<PathBuf>,
}

impl Notifier {
    fn new(tx: mpsc::Sender<()>) -> Notifier {
        let watcher = notify::recommended_watcher(move |_res: notify::Result<notify::Event>| {
            let _ = tx.send(());
        })
        .ok();
        Notifier {
            watcher,
            watched: BTreeSet::new(),
        }
    }

    /// Watches the directories holding `files`, non-recursively.
    fn track(&mut self, files: impl IntoIterator<Item = PathBuf>) {
        let Some(w) = self.watcher.as_mut() else {
            return;
        };
        for f in files {
            let dir = f
                .parent()
                .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            if self.watched.contains(&dir) {
                continue;
            }
            if w.watch(&dir, RecursiveMode::NonRecursive).is_ok() {
                self.watched.insert(dir);
            }
        }
    }
}

fn tracked_files(engine: &Engine, file: &Path) -> Vec<PathBuf> {
    let base = &engine.options().base_dir;
    let mut files = vec![file.to_path_buf()];
    files.extend(engine.watched_paths().into_iter().map(|p| base.join(p)));
    files
}

enum Trigger {
    Initial,
    Source,
    External(Vec<String>),
}

impl Trigger {
    fn name(&self) -> &'static str {
        match self {
            Trigger::Initial => "initial",
            Trigger::Source => "source",
            Trigger::External(_) => "external",
        }
    }
}

fn emit_error(out: &mut dyn Write, json: bool, err: anyhow::Error) -> anyhow::Result<()> {
    if json {
        writeln!(
            out,
            "{}",
            json!({ "event": "error", "code": exit_code(&err), "error": crate::error_json(&err) })
        )?;
    } else {
        writeln!(out, "error: {err:#}")?;
    }
    out.flush()?;
    Ok(())
}

fn run_update(
    engine: &mut Engine,
    trigger: &Trigger,
    opts: &WatchOptions,
    out: &mut dyn Write,
) -> anyhow::Result<()> {
    let outcome = engine.update(opts.mode, &|_| {})?;
    engine.save()?;
    let graph = engine.graph();
    if opts.json {
        let mut line = json!({
            "event": "update",
            "trigger": trigger.name(),
            "executed": outcome.report.executed(),
            "skipped": outcome.report.skipped(),
            "log": log_json(graph, &outcome.report.log),
            "failure": outcome.report.failure,
            "diagnostics": outcome.diagnostics,
        });
        if let Trigger::External(changed) = trigger {
            line["changed"] = json!(changed);
        }
        writeln!(out, "{line}")?;
    } else {
        match trigger {
            Trigger::External(changed) => writeln!(out, "changed input of {}", changed.join(", "))?,
            Trigger::Source => writeln!(out, "program changed")?,
            Trigger::Initial => {}
        }
        for d in &outcome.diagnostics {
            writeln!(out, "warning: {}: {}", d.op, d.message)?;
        }
        render::log_text(out, graph, &outcome.report.log)?;
        if let Some(f) = &outcome.report.failure {
            writeln!(out, "failed: {}: {}", f.op, f.error)?;
        }
        writeln!(
            out,
            "{} executed, {} skipped",
            outcome.report.executed().len(),
            outcome.report.skipped().len()
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Looks for a reason to update: a changed program text or a changed input
/// file. A program that fails to compile is reported and otherwise ignored.
fn poll_change(
    engine: &mut Engine,
    file: &Path,
    opts: &WatchOptions,
    out: &mut dyn Write,
) -> anyhow::Result<Option<Trigger>> {
    match std::fs::read_to_string(file) {
        Ok(text) if text != engine.source() => {
            return match engine.load(&text) {
                Ok(_) => Ok(Some(Trigger::Source)),
                Err(e) => {
                    emit_error(out, opts.json, e.into())?;
                    Ok(None)
                }
            };
        }
        Ok(_) => {}
        // the editor may be replacing the file
        Err(_) => return Ok(None),
    }
    let (marking, diagnostics, _) = engine.refresh_external();
    for d in &diagnostics {
        if opts.json {
            writeln!(
                out,
                "{}",
                json!({ "event": "diagnostic", "op": d.op, "message": d.message })
            )?;
        } else {
            writeln!(out, "warning: {}: {}", d.op, d.message)?;
        }
    }
    if marking.forced.is_empty() {
        return Ok(None);
    }
    let changed = marking
        .forced
        .keys()
        .map(|op| op.as_str().to_string())
        .collect();
    Ok(Some(Trigger::External(changed)))
}

pub fn run(
    engine: &mut Engine,
    file: &Path,
    opts: WatchOptions,
    out: &mut dyn Write,
) -> anyhow::Result<i32> {
    let (tx, rx) = mpsc::channel();
    let mut notifier = Notifier::new(tx);
    notifier.track(tracked_files(engine, file));

    if let Err(e) = run_update(engine, &Trigger::Initial, &opts, out) {
        emit_error(out, opts.json, e)?;
    }
    if opts.json {
        writeln!(
            out,
            "{}",
            json!({ "event": "ready", "watching": notifier.watched.len() })
        )?;
        out.flush()?;
    }

    let mut updates = 0;
    while opts.max_updates.is_none_or(|max| updates < max) {
        match rx.recv_timeout(opts.poll) {
            Ok(()) => {
                // let a burst of notifications settle
                std::thread::sleep(Duration::from_millis(20));
                while rx.try_recv().is_ok() {}
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => std::thread::sleep(opts.poll),
        }
        let Some(trigger) = poll_change(engine, file, &opts, out)? else {
            continue;
        };
        if let Err(e) = run_update(engine, &trigger, &opts, out) {
            emit_error(out, opts.json, e)?;
        }
        notifier.track(tracked_files(engine, file));
        updates += 1;
    }
    Ok(0)
}
