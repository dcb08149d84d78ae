//! HTTP interface to a live flowbook session.
//!
//! All session mutations run on the blocking pool while holding the engine
//! lock, so they are serialized; events are numbered under the same lock and
//! therefore totally ordered.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value as JsonValue};
use tokio::sync::broadcast;

use flowbook_core::dsl::{parse, Literal};
use flowbook_core::staleness::StaleReason;
use flowbook_core::{Engine, EngineOptions, Error, ExecEvent, Freshness, Mode, Session};

const SCHEMA: &str = include_str!("../data/schema.json");

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub options: EngineOptions,
    /// Session cache directory; `None` keeps the session in memory.
    pub cache_dir: Option<PathBuf>,
    /// How often external files are re-checked; `None` disables polling.
    pub poll_interval: Option<Duration>,
}

pub struct AppState {
    engine: Mutex<Engine>,
    events: broadcast::Sender<String>,
    seq: AtomicU64,
    session_id: String,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> Result<Arc<AppState>, Error> {
        let session = match &config.cache_dir {
            Some(dir) => Session::open(dir)?,
            None => Session::in_memory(),
        };
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos());
        let (events, _) = broadcast::channel(1024);
        Ok(Arc::new(AppState {
            engine: Mutex::new(Engine::new(config.options.clone(), session)),
            events,
            seq: AtomicU64::new(0),
            session_id: format!("{:x}-{:x}", std::process::id(), nanos),
        }))
    }

    /// Publishes an event. Callers hold the engine lock.
    fn emit(&self, kind: &str, body: impl Serialize) {
        let mut value = serde_json::to_value(body).unwrap_or(JsonValue::Null);
        if !value.is_object() {
            value = json!({ "data": value });
        }
        value["seq"] = self.seq.fetch_add(1, Ordering::SeqCst).into();
        value["type"] = kind.into();
        let _ = self.events.send(value.to_string());
    }

    pub fn subscribe(&self) -> broadcast::Receiver<String> {
        self.events.subscribe()
    }
}

pub struct ApiError(StatusCode, JsonValue);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownVariable(_) | Error::UnknownAction(_) => StatusCode::NOT_FOUND,
            e if e.is_user_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, json!({ "error": e.to_json() }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn with_engine<T: Send + 'static>(
    state: Arc<AppState>,
    f: impl FnOnce(&AppState, &mut Engine) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(move || {
        let mut engine = state.engine.lock().unwrap_or_else(|p| p.into_inner());
        f(&state, &mut engine)
    })
    .await
    .map_err(|e| {
        ApiError(
            StatusCode::INTERNAL_SERVER_ERROR,
            json!({ "error": { "kind": "internal", "message": e.to_string() } }),
        )
    })?
}

fn mode_of(raw: Option<&str>) -> ApiResult<Mode> {
    match raw {
        None => Ok(Mode::Checked),
        Some(m) => m.parse().map_err(|message: String| {
            ApiError(
                StatusCode::BAD_REQUEST,
                json!({ "error": { "kind": "bad_request", "message": message } }),
            )
        }),
    }
}

fn exec_observer(state: &AppState) -> impl Fn(&ExecEvent) + Sync + '_ {
    move |e: &ExecEvent| state.emit("execution", e)
}

async fn load_program(
    State(state): State<Arc<AppState>>,
    body: String,
) -> ApiResult<Json<JsonValue>> {
    with_engine(state, move |state, engine| {
        let outcome = engine.load(&body)?;
        state.emit("staleness", &outcome);
        Ok(Json(serde_json::to_value(&outcome).unwrap_or_default()))
    })
    .await
}

async fn get_program(State(state): State<Arc<AppState>>) -> ApiResult<Json<JsonValue>> {
    with_engine(state, |state, engine| {
        let roles = &engine.options().roles;
        let cells: Vec<JsonValue> = match parse(engine.source()) {
            Ok(program) => program
                .cells
                .iter()
                .map(|c| {
                    json!({
                        "index": c.index,
                        "role": c.role,
                        "line": c.line,
                        "shown": roles.contains(&c.role),
                        "text": c.raw_text,
                    })
                })
                .collect(),
            Err(_) => Vec::new(),
        };
        let compiled = engine.compiled();
        let session = engine.session();
        let variables: Vec<JsonValue> = compiled
            .graph
            .nodes()
            .iter()
            .flat_map(|n| n.outputs.iter().map(move |v| (n, v)))
            .map(|(n, v)| {
                let freshness = match session.freshness(v.as_str()) {
                    Some(Freshness::UpToDate) => "up_to_date",
                    Some(Freshness::PotentiallyStale) => "potentially_stale",
                    None => "absent",
                };
                json!({
                    "name": v,
                    "type": compiled.type_of(v.as_str()),
                    "producer": n.id,
                    "textual_index": n.textual_index,
                    "freshness": freshness,
                })
            })
            .collect();
        Ok(Json(json!({
            "session_id": state.session_id,
            "version": engine.version(),
            "source": engine.source(),
            "cells": cells,
            "variables": variables,
        })))
    })
    .await
}

#[derive(Deserialize)]
struct FormatQuery {
    format: Option<String>,
}

fn dot_response(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/vnd.graphviz")], text).into_response()
}

async fn get_graph(
    State(state): State<Arc<AppState>>,
    Query(q): Query<FormatQuery>,
) -> ApiResult<Response> {
    with_engine(state, move |_, engine| {
        Ok(match q.format.as_deref() {
            Some("dot") => dot_response(engine.graph().to_dot()),
            _ => Json(engine.graph().to_json()).into_response(),
        })
    })
    .await
}

#[derive(Deserialize)]
struct PlanQuery {
    target: Option<String>,
    mode: Option<String>,
    format: Option<String>,
}

async fn get_plan(
    State(state): State<Arc<AppState>>,
    Query(q): Query<PlanQuery>,
) -> ApiResult<Response> {
    with_engine(state, move |_, engine| {
        let plan = match (q.target.as_deref(), q.mode.as_deref()) {
            (target, None) => engine.plan(target)?,
            (None, Some(m)) => engine.preview_update(mode_of(Some(m))?)?,
            (Some(t), Some(m)) => engine.plan_variable(t, mode_of(Some(m))?)?,
        };
        Ok(match q.format.as_deref() {
            Some("dot") => dot_response(plan.to_dot(engine.graph())),
            _ => Json(plan.to_json(engine.graph())).into_response(),
        })
    })
    .await
}

async fn list_actions(
    State(state): State<Arc<AppState>>,
    Path(name): Path<String>,
) -> ApiResult<Json<JsonValue>> {
    with_engine(state, move |_, engine| {
        let ty = engine
            .compiled()
            .type_of(&name)
            .ok_or_else(|| Error::UnknownVariable(name.clone()))?;
        let actions = engine.options().actions.actions_for(ty);
        Ok(Json(
            json!({ "variable": name, "type": ty, "actions": actions }),
        ))
    })
    .await
}

#[derive(Deserialize)]
struct ModeQuery {
    mode: Option<String>,
}

#[derive(Deserialize, Default)]
struct ActionBody {
    #[serde(default)]
    args: BTreeMap<String, Literal>,
}

async fn run_action(
    State(state): State<Arc<AppState>>,
    Path((name, id)): Path<(String, String)>,
    Query(q): Query<ModeQuery>,
    body: Option<Json<ActionBody>>,
) -> ApiResult<Json<JsonValue>> {
    let args = body.map(|Json(b)| b.args).unwrap_or_default();
    with_engine(state, move |state, engine| {
        let mode = mode_of(q.mode.as_deref())?;
        let result = engine.run_action(&name, &id, &args, mode, &exec_observer(state))?;
        engine.save()?;
        state.emit(
            "action",
            json!({ "id": result.id, "variable": result.variable, "action_id": result.action_id }),
        );
        Ok(Json(serde_json::to_value(&result).unwrap_or_default()))
    })
    .await
}

async fn update(
    State(state): State<Arc<AppState>>,
    Query(q): Query<ModeQuery>,
) -> ApiResult<Json<JsonValue>> {
    with_engine(state, move |state, engine| {
        let mode = mode_of(q.mode.as_deref())?;
        let outcome = engine.update(mode, &exec_observer(state))?;
        engine.save()?;
        state.emit(
            "update",
            json!({ "mode": mode, "executed": outcome.report.executed(), "skipped": outcome.report.skipped(), "failure": outcome.report.failure }),
        );
        let mut body = serde_json::to_value(&outcome).unwrap_or_default();
        body["plan"] = outcome.plan.to_json(engine.graph());
        Ok(Json(body))
    })
    .await
}

fn refresh_locked(state: &AppState, engine: &mut Engine) -> JsonValue {
    let (marking, diagnostics, flagged) = engine.refresh_external();
    let changed: Vec<_> = marking
        .forced
        .iter()
        .filter(|(_, r)| **r == StaleReason::HiddenChanged)
        .map(|(op, _)| op.clone())
        .collect();
    let body = json!({
        "changed": changed,
        "marking": marking,
        "diagnostics": diagnostics,
        "stale_results": flagged,
    });
    if !changed.is_empty() || !diagnostics.is_empty() {
        state.emit("external", &body);
    }
    body
}

async fn refresh(State(state): State<Arc<AppState>>) -> ApiResult<Json<JsonValue>> {
    with_engine(state, |state, engine| {
        Ok(Json(refresh_locked(state, engine)))
    })
    .await
}

async fn results(State(state): State<Arc<AppState>>) -> ApiResult<Json<JsonValue>> {
    with_engine(state, |_, engine| {
        let all: Vec<_> = engine.results().iter().collect();
        Ok(Json(serde_json::to_value(all).unwrap_or_default()))
    })
    .await
}

async fn schema() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], SCHEMA).into_response()
}

async fn events(
    State(state): State<Arc<AppState>>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = state.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(msg) => return Some((Ok(Event::default().data(msg)), rx)),
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/program", put(load_program).get(get_program))
        .route("/edits", post(load_program))
        .route("/graph", get(get_graph))
        .route("/plan", get(get_plan))
        .route("/variables/{name}/actions", get(list_actions))
        .route("/variables/{name}/actions/{id}", post(run_action))
        .route("/update", post(update))
        .route("/refresh", post(refresh))
        .route("/results", get(results))
        .route("/events", get(events))
        .route("/schema", get(schema))
        .with_state(state)
}

/// Re-checks external files periodically and reports changes as events.
pub fn spawn_poller(state: Arc<AppState>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(every);
        loop {
            ticker.tick().await;
            let s = Arc::clone(&state);
            let _ = tokio::task::spawn_blocking(move || {
                let mut engine = s.engine.lock().unwrap_or_else(|p| p.into_inner());
                refresh_locked(&s, &mut engine);
            })
            .await;
        }
    })
}

/// Serves until the process is stopped.
pub async fn serve(
    addr: SocketAddr,
    config: ServiceConfig,
) -> Result<(), Box<dyn std::error::Error>> {
    let state = AppState::new(&config)?;
    if let Some(every) = config.poll_interval {
        spawn_poller(Arc::clone(&state), every);
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}
