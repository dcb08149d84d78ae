//! Type-directed inspection actions. The registry is data: each action maps
//! a semantic type to a standard-library call and a render kind.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsl::{Literal, SemanticType, SignatureLookup};
use crate::error::{Error, Result};
use crate::executor::ExecutionReport;
use crate::graph::{DataflowGraph, OpId};
use crate::planner::{prune, ExecutionPlan};
use crate::session::Session;
use crate::staleness::{conditional_nodes, Mode, StaleReason};
use crate::stdlib::Stdlib;
use crate::value::{Scalar, Value};

const DEFAULT_REGISTRY: &str = include_str!("../data/actions.toml");

/// Calls with this name return the variable's value unchanged.
pub const IDENTITY_CALL: &str = "value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderKind {
    Table,
    ColumnList,
    Histogram,
    Scalar,
    ModelSummary,
}

impl RenderKind {
    pub fn accepts(self, value: &Value) -> bool {
        matches!(
            (self, value),
            (
                RenderKind::Table | RenderKind::ModelSummary,
                Value::Table(_)
            ) | (RenderKind::ColumnList, Value::Scalar(Scalar::List(_)))
                | (RenderKind::Histogram, Value::Histogram(_))
                | (RenderKind::Scalar, Value::Scalar(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionParam {
    pub name: String,
    #[serde(rename = "type", with = "type_name")]
    pub ty: SemanticType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Literal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionAction {
    pub id: String,
    pub label: String,
    /// A semantic type name, or `Scalar` for any scalar type.
    #[serde(rename = "type")]
    pub applicable_type: String,
    pub call: String,
    pub render: RenderKind,
    #[serde(default)]
    pub params: Vec<ActionParam>,
}

impl InspectionAction {
    pub fn applies_to(&self, ty: SemanticType) -> bool {
        self.applicable_type == ty.name() || (self.applicable_type == "Scalar" && ty.is_scalar())
    }

    /// Binds user arguments to the action's parameters, filling defaults.
    pub fn bind(&self, args: &BTreeMap<String, Literal>) -> Result<Vec<Literal>> {
        if let Some(unknown) = args
            .keys()
            .find(|k| !self.params.iter().any(|p| &p.name == *k))
        {
            return Err(Error::ActionArgument {
                name: unknown.clone(),
                message: format!("`{}` has no such parameter", self.id),
            });
        }
        self.params
            .iter()
            .map(|p| {
                let value = args.get(&p.name).or(p.default.as_ref()).ok_or_else(|| {
                    Error::ActionArgument {
                        name: p.name.clone(),
                        message: "missing required argument".into(),
                    }
                })?;
                let found = SemanticType::of_literal(value);
                if found != p.ty {
                    return Err(Error::ActionArgument {
                        name: p.name.clone(),
                        message: format!("expected {}, found {found}", p.ty),
                    });
                }
                Ok(value.clone())
            })
            .collect()
    }
}

mod type_name {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::dsl::SemanticType;

    pub fn serialize<S: Serializer>(ty: &SemanticType, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(ty.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SemanticType, D::Error> {
        let name = String::deserialize(d)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses command-line argument text as a literal of the given type.
pub fn parse_arg_text(name: &str, ty: SemanticType, text: &str) -> Result<Literal> {
    let bad = |what: &str| Error::ActionArgument {
        name: name.to_string(),
        message: format!("`{text}` is not a {what}"),
    };
    Ok(match ty {
        SemanticType::Number => Literal::Number(text.parse().map_err(|_| bad("number"))?),
        SemanticType::Bool => Literal::Bool(match text {
            "true" | "True" => true,
            "false" | "False" => false,
            _ => return Err(bad("bool")),
        }),
        SemanticType::List => Literal::List(
            text.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| Literal::Str(s.trim().to_string()))
                .collect(),
        ),
        _ => Literal::Str(text.to_string()),
    })
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ActionRegistry {
    actions: Vec<InspectionAction>,
}

impl Default for ActionRegistry {
    fn default() -> Self {
        ActionRegistry::from_toml(DEFAULT_REGISTRY).expect("bundled action registry is valid")
    }
}

impl ActionRegistry {
    pub fn from_toml(text: &str) -> Result<ActionRegistry> {
        let registry: ActionRegistry = toml::from_str(text).map_err(|e| Error::Config {
            what: "action registry",
            message: e.to_string(),
        })?;
        registry.validate()?;
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<ActionRegistry> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ActionRegistry::from_toml(&text)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |message: String| Error::Config {
            what: "action registry",
            message,
        };
        let mut seen = BTreeSet::new();
        for a in &self.actions {
            if !seen.insert((a.id.as_str(), a.applicable_type.as_str())) {
                return Err(invalid(format!(
                    "duplicate action `{}` for {}",
                    a.id, a.applicable_type
                )));
            }
            if a.applicable_type != "Scalar" && a.applicable_type.parse::<SemanticType>().is_err() {
                return Err(invalid(format!("unknown type `{}`", a.applicable_type)));
            }
            if a.call == IDENTITY_CALL {
                if !a.params.is_empty() {
                    return Err(invalid(format!("`{}` passes parameters to `value`", a.id)));
                }
                continue;
            }
            let sig = Stdlib::global().signature(&a.call).ok_or_else(|| {
                invalid(format!("`{}` calls unknown function `{}`", a.id, a.call))
            })?;
            if sig.params.len() != a.params.len() + 1 || sig.returns.len() != 1 {
                return Err(invalid(format!(
                    "`{}` does not match the signature of `{}`",
                    a.id, a.call
                )));
            }
            for (p, sp) in a.params.iter().zip(&sig.params[1..]) {
                if p.ty != sp.ty {
                    return Err(invalid(format!(
                        "parameter `{}` of `{}` must be {}",
                        p.name, a.id, sp.ty
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> &[InspectionAction] {
        &self.actions
    }

    /// Actions applicable to `ty`, in registry order.
    pub fn actions_for(&self, ty: SemanticType) -> Vec<&InspectionAction> {
        self.actions.iter().filter(|a| a.applies_to(ty)).collect()
    }

    pub fn find(&self, ty: SemanticType, id: &str) -> Result<&InspectionAction> {
        match self.actions_for(ty).into_iter().find(|a| a.id == id) {
            Some(a) => Ok(a),
            None if self.actions.iter().any(|a| a.id == id) => Err(Error::ActionNotApplicable {
                action: id.to_string(),
                variable: ty.name().to_string(),
            }),
            None => Err(Error::UnknownAction(id.to_string())),
        }
    }
}

/// Applies an action's call to a computed value.
pub fn render(action: &InspectionAction, value: &Value, args: &[Literal]) -> Result<Value> {
    if action.call == IDENTITY_CALL {
        return Ok(value.clone());
    }
    let extra: Vec<Value> = args
        .iter()
        .map(|l| Value::Scalar(Scalar::from(l)))
        .collect();
    let mut refs: Vec<&Value> = vec![value];
    refs.extend(extra.iter());
    let mut out = Stdlib::global()
        .call(&action.call, &refs, &Default::default())
        .map_err(|source| Error::ActionArgument {
            name: action.id.clone(),
            message: source.to_string(),
        })?;
    Ok(out.remove(0))
}

/// Plan that brings `variable` up to date: the cold prune-to-variable plan
/// minus every node whose outputs are already up to date.
pub fn plan_for_variable(
    graph: &DataflowGraph,
    variable: &str,
    session: &Session,
    forced: &BTreeMap<OpId, StaleReason>,
    mode: Mode,
) -> Result<ExecutionPlan> {
    let kept = prune(graph, variable)?;
    let needed: BTreeSet<OpId> = kept
        .into_iter()
        .filter(|id| {
            graph
                .node(id)
                .is_some_and(|n| n.outputs.iter().any(|o| !session.is_up_to_date(o.as_str())))
        })
        .collect();
    let conditional = conditional_nodes(graph, &needed, forced, session, mode);
    ExecutionPlan::new(graph, needed, Some(variable.into()), conditional)
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionResult {
    pub id: u64,
    pub variable: String,
    pub action_id: String,
    pub render: RenderKind,
    pub payload: Value,
    /// Microseconds since the Unix epoch.
    pub produced_at: u64,
    pub stale: bool,
    pub execution: ExecutionReport,
}

/// Bounded history of action results, oldest evicted first.
#[derive(Debug, Clone)]
pub struct ResultRing {
    capacity: usize,
    next_id: u64,
    results: VecDeque<ActionResult>,
}

impl Default for ResultRing {
    fn default() -> Self {
        ResultRing::new(20)
    }
}

impl ResultRing {
    pub fn new(capacity: usize) -> Self {
        ResultRing {
            capacity: capacity.max(1),
            next_id: 0,
            results: VecDeque::new(),
        }
    }

    pub fn push(&mut self, mut result: ActionResult) -> &ActionResult {
        result.id = self.next_id;
        self.next_id += 1;
        if self.results.len() == self.capacity {
            self.results.pop_front();
        }
        self.results.push_back(result);
        self.results.back().unwrap()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionResult> {
        self.results.iter()
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    /// Flags results whose variable is in `stale`. Returns the flagged ids.
    pub fn flag_stale<'a>(&mut self, stale: impl Fn(&str) -> bool + 'a) -> Vec<u64> {
        let mut flagged = Vec::new();
        for r in &mut self.results {
            if !r.stale && stale(&r.variable) {
                r.stale = true;
                flagged.push(r.id);
            }
        }
        flagged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Table;

    fn ids(registry: &ActionRegistry, ty: SemanticType) -> Vec<&str> {
        registry
            .actions_for(ty)
            .iter()
            .map(|a| a.id.as_str())
            .collect()
    }

    #[test]
    fn menus_per_type() {
        let r = ActionRegistry::default();
        assert_eq!(
            ids(&r, SemanticType::Table),
            [
                "show_dataset",
                "list_columns",
                "summary_statistics",
                "histogram"
            ]
        );
        assert_eq!(
            ids(&r, SemanticType::Model),
            ["show_hyperparameters", "show_fitted_params"]
        );
        assert_eq!(ids(&r, SemanticType::Column), ["show_values", "histogram"]);
        for ty in [
            SemanticType::Number,
            SemanticType::String,
            SemanticType::Bool,
            SemanticType::List,
        ] {
            assert_eq!(ids(&r, ty), ["show_value"]);
        }
        assert_eq!(r.actions_for(SemanticType::Table)[0].label, "Show dataset");
    }

    #[test]
    fn unknown_and_inapplicable_actions_are_distinguished() {
        let r = ActionRegistry::default();
        assert!(matches!(
            r.find(SemanticType::Model, "show_dataset"),
            Err(Error::ActionNotApplicable { .. })
        ));
        assert!(matches!(
            r.find(SemanticType::Table, "sort"),
            Err(Error::UnknownAction(_))
        ));
    }

    #[test]
    fn binding_fills_defaults_and_checks_types() {
        let r = ActionRegistry::default();
        let hist = r.find(SemanticType::Table, "histogram").unwrap();
        let args = BTreeMap::from([("column".to_string(), Literal::Str("Age".into()))]);
        assert_eq!(
            hist.bind(&args).unwrap(),
            [Literal::Str("Age".into()), Literal::Number(10.0)]
        );
        assert!(hist.bind(&BTreeMap::new()).is_err());
        let wrong = BTreeMap::from([
            ("column".to_string(), Literal::Str("Age".into())),
            ("bins".to_string(), Literal::Str("many".into())),
        ]);
        assert!(matches!(
            hist.bind(&wrong),
            Err(Error::ActionArgument { .. })
        ));
        let extra = BTreeMap::from([("colour".to_string(), Literal::Str("red".into()))]);
        assert!(hist.bind(&extra).is_err());
    }

    #[test]
    fn argument_text_parsing() {
        assert_eq!(
            parse_arg_text("n", SemanticType::Number, "5").unwrap(),
            Literal::Number(5.0)
        );
        assert!(parse_arg_text("n", SemanticType::Number, "five").is_err());
        assert_eq!(
            parse_arg_text("c", SemanticType::List, "a,b").unwrap(),
            Literal::List(vec![Literal::Str("a".into()), Literal::Str("b".into())])
        );
    }

    #[test]
    fn invalid_registries_are_rejected() {
        let bad_call = "[[actions]]\nid = \"x\"\nlabel = \"X\"\ntype = \"Table\"\ncall = \"nope\"\nrender = \"table\"\n";
        assert!(ActionRegistry::from_toml(bad_call).is_err());
        let bad_type = bad_call
            .replace("Table", "Frame")
            .replace("nope", "describe");
        assert!(ActionRegistry::from_toml(&bad_type).is_err());
        let ok = bad_call.replace("nope", "describe");
        assert_eq!(ActionRegistry::from_toml(&ok).unwrap().actions().len(), 1);
    }

    #[test]
    fn histogram_action_equals_direct_call() {
        let table = Value::Table(
            crate::stdlib::read_csv_file(
                &std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                    .join("../../samples/train.csv"),
            )
            .unwrap(),
        );
        let r = ActionRegistry::default();
        let hist = r.find(SemanticType::Table, "histogram").unwrap();
        let args = hist
            .bind(&BTreeMap::from([(
                "column".to_string(),
                Literal::Str("Fare".into()),
            )]))
            .unwrap();
        let payload = render(hist, &table, &args).unwrap();
        let direct = Stdlib::global()
            .call(
                "histogram",
                &[
                    &table,
                    &Value::Scalar(Scalar::Str("Fare".into())),
                    &Value::Scalar(Scalar::Number(10.0)),
                ],
                &Default::default(),
            )
            .unwrap();
        assert_eq!(payload, direct[0]);
        assert!(hist.render.accepts(&payload));
    }

    #[test]
    fn render_kinds_match_payloads() {
        let t = Value::Table(Table::default());
        let r = ActionRegistry::default();
        for id in ["show_dataset", "list_columns", "summary_statistics"] {
            let a = r.find(SemanticType::Table, id).unwrap();
            let args = a.bind(&BTreeMap::new()).unwrap();
            let payload = render(a, &t, &args).unwrap();
            assert!(a.render.accepts(&payload), "{id}");
        }
    }

    #[test]
    fn ring_evicts_oldest_and_flags_stale() {
        let mut ring = ResultRing::new(2);
        for v in ["a", "b", "c"] {
            ring.push(ActionResult {
                id: 0,
                variable: v.into(),
                action_id: "show_value".into(),
                render: RenderKind::Scalar,
                payload: Value::Scalar(Scalar::Bool(true)),
                produced_at: 0,
                stale: false,
                execution: ExecutionReport::default(),
            });
        }
        let vars: Vec<&str> = ring.iter().map(|r| r.variable.as_str()).collect();
        assert_eq!(vars, ["b", "c"]);
        assert_eq!(ring.flag_stale(|v| v == "c"), [2]);
        assert!(ring.flag_stale(|v| v == "c").is_empty());
    }
}
