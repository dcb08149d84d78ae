//! Execution plans: order edges between impure operations, pruning to a
//! target, and grouping into levels of mutually independent operations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::dsl::VarName;
use crate::error::{Error, Result};
use crate::graph::{escape, DataEdge, DataflowGraph, OpId, OrderEdge};
use crate::purity::NodePurity;

/// Adds an order edge between every pair of textually consecutive impure
/// operations that are not already connected by a path. The chain fixes a
/// total textual order among all impure operations without redundant edges.
pub fn add_order_edges(graph: &mut DataflowGraph) {
    let impure: Vec<OpId> = graph
        .nodes()
        .iter()
        .filter(|n| n.is_impure())
        .map(|n| n.id.clone())
        .collect();
    for pair in impure.windows(2) {
        if !graph.has_path(&pair[0], &pair[1]) {
            graph.order_edges.insert(OrderEdge {
                from: pair[0].clone(),
                to: pair[1].clone(),
            });
        }
    }
}

/// Operations with a path to `target` over data and order edges.
pub fn prune(graph: &DataflowGraph, target: &str) -> Result<BTreeSet<OpId>> {
    let producer = graph
        .producer(target)
        .ok_or_else(|| Error::UnknownVariable(target.to_string()))?;
    Ok(graph.closure_backward([producer.clone()], true))
}

/// Groups `nodes` by the length of the longest incoming path within the
/// induced subgraph. Members of a level are sorted by textual position.
pub fn levelize(graph: &DataflowGraph, nodes: &BTreeSet<OpId>) -> Result<Vec<Vec<OpId>>> {
    let mut preds: BTreeMap<&OpId, BTreeSet<&OpId>> =
        nodes.iter().map(|n| (n, BTreeSet::new())).collect();
    let edges = graph
        .data_edges
        .iter()
        .map(|e| (&e.from, &e.to))
        .chain(graph.order_edges.iter().map(|e| (&e.from, &e.to)));
    for (from, to) in edges {
        if nodes.contains(from) && nodes.contains(to) {
            preds.get_mut(to).unwrap().insert(from);
        }
    }

    let mut level_of: BTreeMap<&OpId, usize> = BTreeMap::new();
    let mut remaining: Vec<&OpId> = nodes.iter().collect();
    while !remaining.is_empty() {
        let before = remaining.len();
        remaining.retain(|id| {
            let ready = preds[*id].iter().all(|p| level_of.contains_key(*p));
            if ready {
                let level = preds[*id]
                    .iter()
                    .map(|p| level_of[*p] + 1)
                    .max()
                    .unwrap_or(0);
                level_of.insert(*id, level);
            }
            !ready
        });
        if remaining.len() == before {
            return Err(Error::Cycle(remaining[0].clone()));
        }
    }

    let depth = level_of.values().map(|l| l + 1).max().unwrap_or(0);
    let mut levels: Vec<Vec<OpId>> = vec![Vec::new(); depth];
    for (id, level) in level_of {
        levels[level].push(id.clone());
    }
    let position = |id: &OpId| graph.node(id).map_or(usize::MAX, |n| n.textual_index);
    for level in &mut levels {
        level.sort_by_key(|id| position(id));
    }
    Ok(levels)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ExecutionPlan {
    pub target: Option<VarName>,
    pub levels: Vec<Vec<OpId>>,
    pub data_edges: Vec<DataEdge>,
    pub order_edges: Vec<OrderEdge>,
    /// Nodes that run only if one of their inputs changed.
    pub conditional: BTreeSet<OpId>,
    /// Impure operations left out because they have no path to the target.
    pub skipped_impure: Vec<OpId>,
}

impl ExecutionPlan {
    pub fn new(
        graph: &DataflowGraph,
        nodes: BTreeSet<OpId>,
        target: Option<VarName>,
        conditional: BTreeSet<OpId>,
    ) -> Result<ExecutionPlan> {
        let levels = levelize(graph, &nodes)?;
        let data_edges = graph
            .data_edges
            .iter()
            .filter(|e| nodes.contains(&e.from) && nodes.contains(&e.to))
            .cloned()
            .collect();
        let order_edges = graph
            .order_edges
            .iter()
            .filter(|e| nodes.contains(&e.from) && nodes.contains(&e.to))
            .cloned()
            .collect();
        Ok(ExecutionPlan {
            target,
            levels,
            data_edges,
            order_edges,
            conditional: conditional.intersection(&nodes).cloned().collect(),
            skipped_impure: Vec::new(),
        })
    }

    /// Cold plan computing `target` from scratch.
    pub fn for_target(graph: &DataflowGraph, target: &str) -> Result<ExecutionPlan> {
        let kept = prune(graph, target)?;
        let skipped_impure = graph
            .nodes()
            .iter()
            .filter(|n| n.is_impure() && !kept.contains(&n.id))
            .map(|n| n.id.clone())
            .collect();
        let mut plan =
            ExecutionPlan::new(graph, kept, Some(VarName::new(target)), BTreeSet::new())?;
        plan.skipped_impure = skipped_impure;
        Ok(plan)
    }

    /// Cold plan running every operation.
    pub fn for_all(graph: &DataflowGraph) -> Result<ExecutionPlan> {
        let all = graph.nodes().iter().map(|n| n.id.clone()).collect();
        ExecutionPlan::new(graph, all, None, BTreeSet::new())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &OpId> {
        self.levels.iter().flatten()
    }

    pub fn node_set(&self) -> BTreeSet<OpId> {
        self.nodes().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level_of(&self, id: &OpId) -> Option<usize> {
        self.levels.iter().position(|l| l.contains(id))
    }

    /// Canonical JSON: nodes sorted by id with level, purity and conditional
    /// flag; edges typed `data` or `order`.
    pub fn to_json(&self, graph: &DataflowGraph) -> serde_json::Value {
        let mut ids: Vec<&OpId> = self.nodes().collect();
        ids.sort();
        let nodes: Vec<serde_json::Value> = ids
            .iter()
            .map(|id| {
                let node = graph.node(id);
                serde_json::json!({
                    "id": id,
                    "callee": node.map(|n| n.callee.as_str()),
                    "level": self.level_of(id),
                    "purity": node.and_then(|n| n.purity.as_ref()).map(NodePurity::label),
                    "conditional": self.conditional.contains(*id),
                })
            })
            .collect();
        let mut edges: Vec<serde_json::Value> = self
            .data_edges
            .iter()
            .map(|e| serde_json::json!({"from": e.from, "to": e.to, "kind": "data", "label": e.label}))
            .collect();
        edges.extend(
            self.order_edges
                .iter()
                .map(|e| serde_json::json!({"from": e.from, "to": e.to, "kind": "order"})),
        );
        serde_json::json!({
            "target": self.target,
            "nodes": nodes,
            "edges": edges,
            "levels": self.levels,
            "skipped_impure": self.skipped_impure,
        })
    }

    pub fn to_dot(&self, graph: &DataflowGraph) -> String {
        let mut out = String::from("digraph plan {\n  node [shape=box, style=rounded];\n");
        for (level, ids) in self.levels.iter().enumerate() {
            for (k, id) in ids.iter().enumerate() {
                let callee = graph.node(id).map_or("?", |n| n.callee.as_str());
                // numbers for sequential steps, letters for parallel members
                let tag = if ids.len() > 1 {
                    format!("{}{}", level + 1, (b'a' + (k % 26) as u8) as char)
                } else {
                    format!("{}", level + 1)
                };
                let cond = if self.conditional.contains(id) {
                    "?"
                } else {
                    ""
                };
                let _ = writeln!(
                    out,
                    "  \"{}\" [label=\"{tag}: {}{cond}\"];",
                    escape(id.as_str()),
                    escape(callee)
                );
            }
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
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dsl::{parse, typecheck};
    use crate::purity::{annotate, PurityInfo, PurityOptions};
    use crate::stdlib::Stdlib;

    const EXAMPLE: &str = include_str!("../../../samples/titanic.flow");

    fn prepared(src: &str, info: &PurityInfo) -> DataflowGraph {
        let mut g =
            DataflowGraph::build(&typecheck(&parse(src).unwrap(), Stdlib::global()).unwrap());
        let opts = PurityOptions {
            normalize: false,
            ..Default::default()
        };
        annotate(&mut g, info, &opts).unwrap();
        add_order_edges(&mut g);
        g
    }

    fn ids(v: &[&str]) -> Vec<OpId> {
        v.iter().map(|s| OpId::from(*s)).collect()
    }

    fn order_edge(a: &str, b: &str) -> OrderEdge {
        OrderEdge {
            from: a.into(),
            to: b.into(),
        }
    }

    #[test]
    fn single_impure_node_gets_no_order_edges() {
        let g = prepared(EXAMPLE, &PurityInfo::default());
        assert!(g.order_edges.is_empty());
    }

    #[test]
    fn impure_drop_and_keep_are_ordered_textually() {
        let mut info = PurityInfo::default();
        info.merge(
            PurityInfo::from_toml(
                "[functions]\ndrop = { purity = \"impure\" }\nkeep = { purity = \"impure\" }",
            )
            .unwrap(),
        );
        let g = prepared(EXAMPLE, &info);
        // read_csv reaches drop via data already; drop and keep are independent
        assert_eq!(
            g.order_edges.iter().cloned().collect::<Vec<_>>(),
            [order_edge("X_train", "y_train")]
        );
    }

    #[test]
    fn independent_writes_form_a_chain() {
        let src = "t = random_table(1, 3, 2)\n\
                   w1 = write_csv(t, \"a.csv\")\n\
                   w2 = write_csv(t, \"b.csv\")\n\
                   w3 = write_csv(t, \"c.csv\")";
        let g = prepared(src, &PurityInfo::default());
        // random_table is impure too without normalization
        let edges: BTreeSet<OrderEdge> = g.order_edges.clone();
        assert!(edges.contains(&order_edge("w1", "w2")));
        assert!(edges.contains(&order_edge("w2", "w3")));
        assert!(!edges.contains(&order_edge("w1", "w3")));
        let plan = ExecutionPlan::for_all(&g).unwrap();
        // oracle: every topological order respects textual order among the
        // writes, so their levels are strictly increasing
        let lv: Vec<usize> = ["w1", "w2", "w3"]
            .iter()
            .map(|w| plan.level_of(&OpId::from(*w)).unwrap())
            .collect();
        assert!(lv[0] < lv[1] && lv[1] < lv[2]);
    }

    #[test]
    fn plan_for_x_train_is_read_then_drop() {
        let g = prepared(EXAMPLE, &PurityInfo::default());
        let plan = ExecutionPlan::for_target(&g, "X_train").unwrap();
        assert_eq!(plan.levels, [ids(&["train_df"]), ids(&["X_train"])]);
        let plan = ExecutionPlan::for_target(&g, "train_df").unwrap();
        assert_eq!(plan.levels, [ids(&["train_df"])]);
        let plan = ExecutionPlan::for_target(&g, "trained_svc").unwrap();
        assert_eq!(plan.len(), 5);
        assert!(ExecutionPlan::for_target(&g, "nope").is_err());
    }

    #[test]
    fn full_titanic_plan_levels() {
        let g = prepared(EXAMPLE, &PurityInfo::default());
        let plan = ExecutionPlan::for_all(&g).unwrap();
        assert_eq!(
            plan.levels,
            [
                ids(&["train_df", "svc"]),
                ids(&["X_train", "y_train"]),
                ids(&["trained_svc"])
            ]
        );
    }

    #[test]
    fn pruned_impure_nodes_are_reported() {
        let src = "t = random_table(1, 3, 2)\nw = write_csv(t, \"o.csv\")\ns = SVC(1.0)";
        let g = prepared(src, &PurityInfo::default());
        let plan = ExecutionPlan::for_target(&g, "s").unwrap();
        assert_eq!(plan.skipped_impure, ids(&["t", "w"]));
    }

    #[test]
    fn target_plan_keeps_earlier_impure_ops_reached_by_order_edges() {
        let src = "a = random_table(1, 3, 2)\nw = write_csv(a, \"o.csv\")\nb = read_csv(\"o.csv\")\nh = head(b)";
        let g = prepared(src, &PurityInfo::default());
        let kept = prune(&g, "h").unwrap();
        assert_eq!(kept, ids(&["a", "b", "h", "w"]).into_iter().collect());
    }

    #[test]
    fn single_node_has_one_level() {
        let g = prepared("t = read_csv(\"a.csv\")", &PurityInfo::default());
        assert_eq!(ExecutionPlan::for_all(&g).unwrap().levels, [ids(&["t"])]);
    }

    #[test]
    fn json_is_deterministic() {
        let g = prepared(EXAMPLE, &PurityInfo::default());
        let a = ExecutionPlan::for_all(&g).unwrap().to_json(&g).to_string();
        let b = ExecutionPlan::for_all(&g).unwrap().to_json(&g).to_string();
        assert_eq!(a, b);
    }

    /// Random forest of table sources and `head` calls with impure
    /// `write_csv` leaves.
    fn random_dag() -> impl Strategy<Value = String> {
        (2usize..16)
            .prop_flat_map(|n| {
                proptest::collection::vec(
                    (any::<bool>(), any::<prop::sample::Index>(), any::<bool>()),
                    n,
                )
            })
            .prop_map(|spec| {
                let mut src = String::new();
                for (i, (source, parent, write)) in spec.iter().enumerate() {
                    if i == 0 || *source {
                        src.push_str(&format!("v{i} = random_table({i}, 2, 2)\n"));
                    } else if *write {
                        let p = parent.index(i);
                        src.push_str(&format!("v{i} = head(v{p}, {i})\n"));
                        src.push_str(&format!("w{i} = write_csv(v{i}, \"o{i}.csv\")\n"));
                    } else {
                        let p = parent.index(i);
                        src.push_str(&format!("v{i} = head(v{p}, {i})\n"));
                    }
                }
                src
            })
    }

    /// Longest path to each node by brute-force relaxation.
    fn longest_paths(g: &DataflowGraph) -> BTreeMap<OpId, usize> {
        let mut dist: BTreeMap<OpId, usize> = g.nodes().iter().map(|n| (n.id.clone(), 0)).collect();
        for _ in 0..g.len() {
            for (from, to) in g
                .data_edges
                .iter()
                .map(|e| (&e.from, &e.to))
                .chain(g.order_edges.iter().map(|e| (&e.from, &e.to)))
            {
                let d = dist[from] + 1;
                if d > dist[to] {
                    dist.insert(to.clone(), d);
                }
            }
        }
        dist
    }

    proptest! {
        #[test]
        fn levels_match_longest_paths(src in random_dag()) {
            let g = prepared(&src, &PurityInfo::default());
            let plan = ExecutionPlan::for_all(&g).unwrap();
            let oracle = longest_paths(&g);
            for (id, d) in &oracle {
                prop_assert_eq!(plan.level_of(id), Some(*d));
            }
            for e in &g.data_edges {
                prop_assert!(plan.level_of(&e.from) < plan.level_of(&e.to));
            }
            // impure nodes appear in strictly increasing levels in textual order
            let impure: Vec<usize> = g.nodes().iter().filter(|n| n.is_impure())
                .map(|n| plan.level_of(&n.id).unwrap()).collect();
            prop_assert!(impure.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn pruned_plan_is_ancestor_closed(src in random_dag(), pick in any::<prop::sample::Index>()) {
            let g = prepared(&src, &PurityInfo::default());
            let target = g.nodes()[pick.index(g.len())].outputs[0].clone();
            let plan = ExecutionPlan::for_target(&g, target.as_str()).unwrap();
            let target_id = g.producer(target.as_str()).unwrap().clone();
            for id in plan.nodes() {
                prop_assert!(g.has_path(id, &target_id));
            }
            // pure-only prefix equals the data ancestors
            if g.nodes().iter().all(|n| !n.is_impure()) {
                prop_assert_eq!(plan.node_set(), g.ancestors_of(target.as_str()).unwrap());
            }
        }
    }
}
