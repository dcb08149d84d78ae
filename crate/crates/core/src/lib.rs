//! Incremental, minimal execution of tagged data-science pipelines.
//!
//! A program is parsed and type-checked ([`dsl`]), turned into an
//! operation-level data-flow graph ([`graph`]) annotated with purity
//! ([`purity`]), planned ([`planner`]), executed against a session
//! ([`executor`], [`session`]) and kept up to date across edits and
//! external changes ([`staleness`]). [`Engine`] drives all of it.

pub mod dsl;
pub mod engine;
pub mod error;
pub mod executor;
pub mod fingerprint;
pub mod graph;
pub mod inspection;
pub mod planner;
pub mod purity;
pub mod session;
pub mod staleness;
pub mod stdlib;
pub mod value;

pub use dsl::{parse, typecheck, CellRole, Literal, Program, SemanticType, TypedProgram, VarName};
pub use engine::{compile, Compiled, EditOutcome, Engine, EngineOptions, UpdateOutcome};
pub use error::{Error, Result, StdlibError};
pub use executor::{execute, ExecEvent, ExecOptions, ExecutionReport};
pub use fingerprint::{fingerprint, Fingerprint};
pub use graph::{DataflowGraph, OpId, OperationNode};
pub use inspection::{ActionRegistry, ActionResult, InspectionAction, RenderKind};
pub use planner::ExecutionPlan;
pub use purity::{NodePurity, PurityInfo};
pub use session::{Freshness, LogEntry, Session};
pub use staleness::{EditDiff, Mode, StalenessMarking};
pub use value::Value;
