//! Operation-level data-flow graph.
//!
//! Every statement becomes one node; a node is identified by its first
//! output variable, which is unique because variables are assigned once.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::dsl::{ArgValue, Literal, Operation, TypedProgram, VarName};
use crate::error::{Error, Result};
use crate::purity::NodePurity;

pub const LITERAL_CALLEE: &str = "<literal>";
pub const ALIAS_CALLEE: &str = "<alias>";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OpId(pub String);

impl OpId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for OpId {
    fn from(s: &str) -> Self {
        OpId(s.to_string())
    }
}

impl From<&VarName> for OpId {
    fn from(v: &VarName) -> Self {
        OpId(v.0.clone())
    }
}

/// What identifies an operation's semantics across edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSignature {
    pub callee: String,
    pub args: Vec<ArgValue>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationNode {
    pub id: OpId,
    pub callee: String,
    /// One entry per parameter, in declaration order.
    pub args: Vec<ArgValue>,
    pub outputs: Vec<VarName>,
    pub textual_index: usize,
    pub purity: Option<NodePurity>,
}

impl OperationNode {
    /// Literal arguments with their parameter positions.
    pub fn literal_args(&self) -> Vec<(usize, &Literal)> {
        self.args
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match a {
                ArgValue::Lit(l) => Some((i, l)),
                ArgValue::Var(_) => None,
            })
            .collect()
    }

    /// Variables read by the operation, in parameter order.
    pub fn input_vars(&self) -> Vec<&VarName> {
        self.args
            .iter()
            .filter_map(|a| match a {
                ArgValue::Var(v) => Some(v),
                ArgValue::Lit(_) => None,
            })
            .collect()
    }

    pub fn signature(&self) -> NodeSignature {
        NodeSignature {
            callee: self.callee.clone(),
            args: self.args.clone(),
        }
    }

    pub fn is_impure(&self) -> bool {
        matches!(self.purity, Some(NodePurity::Impure))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DataEdge {
    pub from: OpId,
    pub to: OpId,
    pub label: VarName,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OrderEdge {
    pub from: OpId,
    pub to: OpId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DataflowGraph {
    /// Nodes in textual order.
    nodes: Vec<OperationNode>,
    index: BTreeMap<OpId, usize>,
    producers: BTreeMap<VarName, OpId>,
    pub data_edges: BTreeSet<DataEdge>,
    pub order_edges: BTreeSet<OrderEdge>,
}

impl DataflowGraph {
    pub fn build(program: &TypedProgram) -> DataflowGraph {
        let mut graph = DataflowGraph::default();
        for stmt in &program.statements {
            let (callee, args) = match &stmt.op {
                Operation::Call { callee, args } => (callee.clone(), args.clone()),
                Operation::Literal(l) => {
                    (LITERAL_CALLEE.to_string(), vec![ArgValue::Lit(l.clone())])
                }
                Operation::Alias(v) => (ALIAS_CALLEE.to_string(), vec![ArgValue::Var(v.clone())]),
            };
            graph.push(OperationNode {
                id: OpId::from(&stmt.targets[0]),
                callee,
                args,
                outputs: stmt.targets.clone(),
                textual_index: stmt.textual_index,
                purity: None,
            });
        }
        graph
    }

    fn push(&mut self, node: OperationNode) {
        for input in node.input_vars() {
            let from = self.producers[input].clone();
            self.data_edges.insert(DataEdge {
                from,
                to: node.id.clone(),
                label: input.clone(),
            });
        }
        for out in &node.outputs {
            self.producers.insert(out.clone(), node.id.clone());
        }
        self.index.insert(node.id.clone(), self.nodes.len());
        self.nodes.push(node);
    }

    pub fn nodes(&self) -> &[OperationNode] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> impl Iterator<Item = &mut OperationNode> {
        self.nodes.iter_mut()
    }

    pub fn node(&self, id: &OpId) -> Option<&OperationNode> {
        self.index.get(id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: &OpId) -> bool {
        self.index.contains_key(id)
    }

    pub fn producer(&self, var: &str) -> Option<&OpId> {
        self.producers.get(var)
    }

    pub fn variables(&self) -> impl Iterator<Item = &VarName> {
        self.producers.keys()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Data-edge consumers of a node.
    pub fn successors<'a>(&'a self, id: &'a OpId) -> impl Iterator<Item = &'a OpId> + 'a {
        self.data_edges
            .iter()
            .filter(move |e| &e.from == id)
            .map(|e| &e.to)
    }

    /// The producer of `target` plus all of its transitive data-edge
    /// predecessors.
    pub fn ancestors_of(&self, target: &str) -> Result<BTreeSet<OpId>> {
        let start = self
            .producer(target)
            .ok_or_else(|| Error::UnknownVariable(target.to_string()))?;
        Ok(self.closure_backward([start.clone()], false))
    }

    /// All nodes with a path to any of `starts` (inclusive), following data
    /// edges and, if requested, order edges.
    pub fn closure_backward(
        &self,
        starts: impl IntoIterator<Item = OpId>,
        with_order: bool,
    ) -> BTreeSet<OpId> {
        let mut preds: BTreeMap<&OpId, Vec<&OpId>> = BTreeMap::new();
        for e in &self.data_edges {
            preds.entry(&e.to).or_default().push(&e.from);
        }
        if with_order {
            for e in &self.order_edges {
                preds.entry(&e.to).or_default().push(&e.from);
            }
        }
        let mut seen: BTreeSet<OpId> = BTreeSet::new();
        let mut queue: VecDeque<OpId> = starts.into_iter().collect();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id.clone()) {
                continue;
            }
            for p in preds.get(&id).into_iter().flatten() {
                if !seen.contains(*p) {
                    queue.push_back((*p).clone());
                }
            }
        }
        seen
    }

    /// True if a path leads from `from` to `to` along data and order edges.
    pub fn has_path(&self, from: &OpId, to: &OpId) -> bool {
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if id == to {
                return true;
            }
            if !seen.insert(id) {
                continue;
            }
            stack.extend(
                self.data_edges
                    .iter()
                    .filter(|e| &e.from == id)
                    .map(|e| &e.to),
            );
            stack.extend(
                self.order_edges
                    .iter()
                    .filter(|e| &e.from == id)
                    .map(|e| &e.to),
            );
        }
        false
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph dataflow {\n  node [shape=box, style=rounded];\n");
        for node in &self.nodes {
            let color = match node.purity {
                Some(NodePurity::Impure) => ", style=\"rounded,filled\", fillcolor=\"#f4cccc\"",
                Some(_) => ", style=\"rounded,filled\", fillcolor=\"#d9ead3\"",
                None => "",
            };
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\"{color}];",
                escape(node.id.as_str()),
                escape(&node.callee)
            );
        }
        for e in &self.data_edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                escape(e.from.as_str()),
                escape(e.to.as_str()),
                escape(e.label.as_str())
            );
        }
        for e in &self.order_edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [style=dashed, color=red];",
                escape(e.from.as_str()),
                escape(e.to.as_str())
            );
        }
        out.push_str("}\n");
        out
    }

    /// Canonical JSON document: nodes sorted by id, edges sorted.
    pub fn to_json(&self) -> serde_json::Value {
        let mut nodes: Vec<&OperationNode> = self.nodes.iter().collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        serde_json::json!({
            "nodes": nodes.iter().map(|n| node_json(n)).collect::<Vec<_>>(),
            "data_edges": self.data_edges,
            "order_edges": self.order_edges,
        })
    }
}

pub(crate) fn node_json(n: &OperationNode) -> serde_json::Value {
    serde_json::json!({
        "id": n.id,
        "callee": n.callee,
        "literal_args": n.literal_args().iter().map(|(i, l)| serde_json::json!([i, l])).collect::<Vec<_>>(),
        "input_vars": n.input_vars(),
        "outputs": n.outputs,
        "textual_index": n.textual_index,
        "purity": n.purity,
    })
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use proptest::prelude::*;

    use super::*;
    use crate::dsl::{parse, typecheck};
    use crate::stdlib::Stdlib;

    const EXAMPLE: &str = include_str!("../../../samples/titanic.flow");

    fn graph(src: &str) -> DataflowGraph {
        DataflowGraph::build(&typecheck(&parse(src).unwrap(), Stdlib::global()).unwrap())
    }

    fn edge(from: &str, to: &str, label: &str) -> DataEdge {
        DataEdge {
            from: from.into(),
            to: to.into(),
            label: label.into(),
        }
    }

    fn ids(v: &[&str]) -> BTreeSet<OpId> {
        v.iter().map(|s| OpId::from(*s)).collect()
    }

    #[test]
    fn titanic_graph_has_five_nodes_and_five_edges() {
        let g = graph(EXAMPLE);
        let callees: Vec<&str> = g.nodes().iter().map(|n| n.callee.as_str()).collect();
        assert_eq!(callees, ["read_csv", "drop", "keep", "SVC", "fit"]);
        let expected: BTreeSet<DataEdge> = [
            edge("train_df", "X_train", "train_df"),
            edge("train_df", "y_train", "train_df"),
            edge("X_train", "trained_svc", "X_train"),
            edge("y_train", "trained_svc", "y_train"),
            edge("svc", "trained_svc", "svc"),
        ]
        .into_iter()
        .collect();
        assert_eq!(g.data_edges, expected);
        assert!(g.order_edges.is_empty());
    }

    #[test]
    fn single_statement_has_no_edges() {
        let g = graph("t = read_csv(\"a.csv\")");
        assert_eq!(g.len(), 1);
        assert!(g.data_edges.is_empty());
    }

    #[test]
    fn ancestors_on_titanic() {
        let g = graph(EXAMPLE);
        assert_eq!(
            g.ancestors_of("X_train").unwrap(),
            ids(&["train_df", "X_train"])
        );
        assert_eq!(g.ancestors_of("train_df").unwrap(), ids(&["train_df"]));
        assert_eq!(g.ancestors_of("trained_svc").unwrap().len(), 5);
        assert!(matches!(
            g.ancestors_of("nope"),
            Err(Error::UnknownVariable(_))
        ));
    }

    #[test]
    fn multi_output_node_has_one_node_with_labeled_edges() {
        let g = graph("t = random_table(1, 10, 2)\na, b = split(t)\nx = head(a)\ny = head(b)");
        assert_eq!(g.len(), 4);
        assert_eq!(g.producer("b"), Some(&OpId::from("a")));
        assert!(g.data_edges.contains(&edge("a", "y", "b")));
        assert!(g.data_edges.contains(&edge("a", "x", "a")));
    }

    #[test]
    fn dot_export_labels_callees_and_variables() {
        let dot = graph(EXAMPLE).to_dot();
        assert!(dot.contains("\"X_train\" [label=\"drop\"]"));
        assert!(dot.contains("\"train_df\" -> \"y_train\" [label=\"train_df\"]"));
    }

    #[test]
    fn json_export_is_sorted_by_id() {
        let json = graph(EXAMPLE).to_json();
        let ids: Vec<&str> = json["nodes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|n| n["id"].as_str().unwrap())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    /// Random DAG rendered as single-assignment statements: each node is a
    /// source or reads one earlier node.
    fn dag_program() -> impl Strategy<Value = String> {
        (1usize..12)
            .prop_flat_map(|n| {
                proptest::collection::vec(proptest::option::of(any::<prop::sample::Index>()), n)
            })
            .prop_map(|choices| {
                let mut src = String::new();
                for (i, choice) in choices.iter().enumerate() {
                    match choice {
                        Some(idx) if i > 0 => {
                            let k = idx.index(i);
                            src.push_str(&format!("v{i} = head(v{k}, {i})\n"));
                        }
                        _ => src.push_str(&format!("v{i} = random_table({i}, 3, 2)\n")),
                    }
                }
                src
            })
    }

    /// Def-use edges found by scanning statement text for variable names.
    fn def_use_oracle(src: &str) -> BTreeSet<(String, String)> {
        let mut defined: HashMap<String, String> = HashMap::new();
        let mut edges = BTreeSet::new();
        for line in src.lines() {
            let (lhs, rhs) = line.split_once('=').unwrap();
            let target = lhs.trim().to_string();
            for word in rhs.split(|c: char| !c.is_alphanumeric() && c != '_') {
                if let Some(producer) = defined.get(word) {
                    edges.insert((producer.clone(), target.clone()));
                }
            }
            defined.insert(target.clone(), target);
        }
        edges
    }

    #[test]
    fn chain_matches_def_use_scan() {
        let src = "x = random_table(1, 2, 2)\ny = head(x, 1)\nz = head(y, 1)\n";
        let g = graph(src);
        let got: BTreeSet<(String, String)> = g
            .data_edges
            .iter()
            .map(|e| (e.from.0.clone(), e.to.0.clone()))
            .collect();
        assert_eq!(g.len(), 3);
        assert_eq!(got, def_use_oracle(src));
        assert_eq!(got.len(), 2);
    }

    proptest! {
        #[test]
        fn edges_equal_def_use_oracle(src in dag_program()) {
            let g = graph(&src);
            let got: BTreeSet<(String, String)> = g
                .data_edges
                .iter()
                .map(|e| (e.from.0.clone(), e.to.0.clone()))
                .collect();
            prop_assert_eq!(got, def_use_oracle(&src));
            // edges point forward in textual order
            for e in &g.data_edges {
                prop_assert!(g.node(&e.from).unwrap().textual_index < g.node(&e.to).unwrap().textual_index);
            }
        }

        #[test]
        fn ancestors_are_closed_and_minimal(src in dag_program(), pick in any::<prop::sample::Index>()) {
            let g = graph(&src);
            let target = g.nodes()[pick.index(g.len())].id.clone();
            let anc = g.ancestors_of(target.as_str()).unwrap();
            for e in &g.data_edges {
                if anc.contains(&e.to) {
                    prop_assert!(anc.contains(&e.from));
                }
            }
            // every member reaches the target, so removing it breaks reachability
            for id in &anc {
                prop_assert!(g.has_path(id, &target));
            }
        }
    }
}
