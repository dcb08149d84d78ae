//! Plain-text output.

use std::io::{self, Write};

use flowbook_core::session::LogEntry;
use flowbook_core::value::{Datum, Scalar, Table};
use flowbook_core::{DataflowGraph, ExecutionPlan, Value};

fn callee<'a>(graph: &'a DataflowGraph, op: &flowbook_core::OpId) -> &'a str {
    graph.node(op).map_or("?", |n| n.callee.as_str())
}

pub fn log_text(out: &mut dyn Write, graph: &DataflowGraph, log: &[LogEntry]) -> io::Result<()> {
    for e in log {
        let verb = if e.skipped { "skip" } else { "run" };
        writeln!(
            out,
            "{verb:<6}{:<20}{}",
            e.op.as_str(),
            callee(graph, &e.op)
        )?;
    }
    Ok(())
}

pub fn plan_text(
    out: &mut dyn Write,
    graph: &DataflowGraph,
    plan: &ExecutionPlan,
) -> io::Result<()> {
    for (level, ids) in plan.levels.iter().enumerate() {
        for (k, id) in ids.iter().enumerate() {
            let tag = if ids.len() > 1 {
                format!("{}{}", level + 1, (b'a' + (k % 26) as u8) as char)
            } else {
                (level + 1).to_string()
            };
            let cond = if plan.conditional.contains(id) {
                " (if changed)"
            } else {
                ""
            };
            writeln!(
                out,
                "{tag:<5}{:<20}{}{cond}",
                id.as_str(),
                callee(graph, id)
            )?;
        }
    }
    for id in &plan.skipped_impure {
        writeln!(
            out,
            "warning: impure operation {} ({}) does not lead to the target and will not run",
            id.as_str(),
            callee(graph, id)
        )?;
    }
    Ok(())
}

pub fn graph_text(out: &mut dyn Write, graph: &DataflowGraph) -> io::Result<()> {
    for node in graph.nodes() {
        let inputs: Vec<&str> = node.input_vars().iter().map(|v| v.as_str()).collect();
        let outputs: Vec<&str> = node.outputs.iter().map(|v| v.as_str()).collect();
        let purity = node.purity.as_ref().map_or("?", |p| p.label());
        writeln!(
            out,
            "{} = {}({})  [{purity}]",
            outputs.join(", "),
            node.callee,
            inputs.join(", ")
        )?;
    }
    Ok(())
}

fn datum(d: &Datum) -> String {
    match d {
        Datum::Null => String::new(),
        Datum::Int(i) => i.to_string(),
        Datum::Float(f) => f.to_string(),
        Datum::Bool(b) => b.to_string(),
        Datum::Str(s) => s.clone(),
    }
}

fn table_text(out: &mut dyn Write, table: &Table) -> io::Result<()> {
    let header: Vec<String> = table.columns.iter().map(|c| c.name.clone()).collect();
    let rows: Vec<Vec<String>> = (0..table.row_count())
        .map(|r| table.row(r).into_iter().map(datum).collect())
        .collect();
    let widths: Vec<usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| {
            rows.iter()
                .map(|r| r[i].len())
                .chain([h.len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    writeln!(out, "{}", line(&header))?;
    for r in &rows {
        writeln!(out, "{}", line(r))?;
    }
    Ok(())
}

pub fn payload_text(out: &mut dyn Write, value: &Value) -> io::Result<()> {
    match value {
        Value::Table(t) => table_text(out, t),
        Value::Column(c) => {
            writeln!(out, "{}", c.name)?;
            for d in &c.cells {
                writeln!(out, "{}", datum(d))?;
            }
            Ok(())
        }
        Value::Scalar(Scalar::List(items)) => {
            for item in items {
                writeln!(out, "{item}")?;
            }
            Ok(())
        }
        Value::Scalar(s) => writeln!(out, "{s}"),
        Value::Histogram(h) => {
            let most = h.counts.iter().copied().max().unwrap_or(0).max(1);
            for (i, count) in h.counts.iter().enumerate() {
                let bar = "#".repeat((count * 40 / most) as usize);
                writeln!(
                    out,
                    "[{:>10.3}, {:>10.3})  {count:>6}  {bar}",
                    h.bin_edges[i],
                    h.bin_edges[i + 1]
                )?;
            }
            Ok(())
        }
        Value::Model(m) => {
            writeln!(out, "{}{}", m.kind, if m.fitted { " (fitted)" } else { "" })?;
            for (k, v) in &m.hyperparams {
                writeln!(out, "  {k} = {v}")?;
            }
            if !m.features.is_empty() {
                writeln!(out, "  features: {}", m.features.join(", "))?;
            }
            for c in &m.centroids {
                let mean: Vec<String> = c.mean.iter().map(|x| format!("{x:.4}")).collect();
                writeln!(out, "  class {}: [{}]", datum(&c.label), mean.join(", "))?;
            }
            Ok(())
        }
    }
}
