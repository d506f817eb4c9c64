use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::json;

use senvm_core::basestation::controller::TARGET_BAND;
use senvm_core::basestation::{Granularity, Series};
use senvm_core::sim::StatusSnapshot;
use senvm_core::{Error, NodeId};

use crate::state::{SequencedEvent, Shared, RECENT_EVENTS};

/// How long a setpoint request waits for the engine to apply it.
const APPLY_TIMEOUT: Duration = Duration::from_secs(5);

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/api/status", get(status))
        .route("/api/readings", get(readings))
        .route("/api/setpoint", post(setpoint))
        .route("/api/events", get(events))
        .route("/api/events/stream", get(event_stream))
        .with_state(shared)
}

/// An error body, `{"error": msg}`.
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    ApiError(code, msg.into()).into_response()
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

#[derive(Serialize)]
pub struct ApiSnapshot {
    #[serde(flatten)]
    pub status: StatusSnapshot,
    pub recent_events: Vec<SequencedEvent>,
    pub latest_event_seq: u64,
}

async fn status(State(s): State<Arc<Shared>>) -> Response {
    let Some(snap) = s.snapshot() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "simulation has not started");
    };
    let recent = s.recent_events(RECENT_EVENTS);
    let latest = recent.last().map_or(0, |e| e.seq);
    Json(ApiSnapshot {
        status: (*snap).clone(),
        recent_events: recent,
        latest_event_seq: latest,
    })
    .into_response()
}

#[derive(Deserialize)]
struct ReadingsParams {
    node: Option<String>,
    from: Option<String>,
    to: Option<String>,
    granularity: Option<String>,
}

#[derive(Serialize)]
struct ReadingsResponse {
    node: u16,
    from: u64,
    to: u64,
    granularity: &'static str,
    series: Series,
}

fn granularity_name(g: Granularity) -> &'static str {
    match g {
        Granularity::Raw => "raw",
        Granularity::Minute => "minute",
        Granularity::Hour => "hour",
        Granularity::Day => "day",
    }
}

fn parse_param<T: std::str::FromStr>(name: &str, v: Option<&str>, default: T) -> Result<T, ApiError> {
    match v {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| bad_request(format!("invalid {name}: {v:?}"))),
    }
}

async fn readings(State(s): State<Arc<Shared>>, Query(q): Query<ReadingsParams>) -> Response {
    let parsed = (|| {
        let Some(node) = q.node.as_deref() else {
            return Err(bad_request("missing node"));
        };
        let node: u16 = parse_param("node", Some(node), 0)?;
        let from: u64 = parse_param("from", q.from.as_deref(), 0)?;
        let to: u64 = parse_param("to", q.to.as_deref(), u64::MAX)?;
        let g: Granularity = parse_param("granularity", q.granularity.as_deref(), Granularity::Raw)?;
        if from > to {
            return Err(bad_request("from is after to"));
        }
        Ok((node, from, to, g))
    })();
    let (node, from, to, g) = match parsed {
        Ok(p) => p,
        Err(e) => return e.into_response(),
    };
    let series = s.with_readings(|store| store.query(NodeId(node), from, to, g));
    Json(ReadingsResponse {
        node,
        from,
        to,
        granularity: granularity_name(g),
        series,
    })
    .into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SetpointBody {
    ac: String,
    value: f64,
}

async fn setpoint(State(s): State<Arc<Shared>>, body: Bytes) -> Response {
    let body: SetpointBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid body: {e}")),
    };
    if !(TARGET_BAND.0..=TARGET_BAND.1).contains(&body.value) {
        return error(
            StatusCode::UNPROCESSABLE_ENTITY,
            Error::TargetOutOfBand(body.value).to_string(),
        );
    }
    let ac = (body.ac != "all").then_some(body.ac);
    if let Some(id) = &ac {
        if !s.has_ac(id) {
            return error(StatusCode::NOT_FOUND, Error::UnknownAc(id.clone()).to_string());
        }
    }
    let Some(rx) = s.submit(ac.clone(), body.value) else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "simulation is not running");
    };
    match tokio::time::timeout(APPLY_TIMEOUT, rx).await {
        Ok(Ok(Ok(()))) => Json(json!({
            "ac": ac.as_deref().unwrap_or("all"),
            "target": body.value,
        }))
        .into_response(),
        Ok(Ok(Err(e @ Error::UnknownAc(_)))) => error(StatusCode::NOT_FOUND, e.to_string()),
        Ok(Ok(Err(e))) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
        _ => error(StatusCode::SERVICE_UNAVAILABLE, "simulation did not apply the change"),
    }
}

#[derive(Deserialize)]
struct EventsParams {
    since: Option<String>,
}

fn cursor(s: &Shared, since: Option<&str>) -> Result<u64, ApiError> {
    let since: u64 = parse_param("since", since, 0)?;
    if since > s.latest_seq() {
        return Err(bad_request(format!("cursor {since} is ahead of the log")));
    }
    Ok(since)
}

#[derive(Serialize)]
struct EventsResponse {
    events: Vec<SequencedEvent>,
    latest: u64,
}

async fn events(State(s): State<Arc<Shared>>, Query(q): Query<EventsParams>) -> Response {
    let since = match cursor(&s, q.since.as_deref()) {
        Ok(c) => c,
        Err(e) => return e.into_response(),
    };
    let events = s.events_after(since);
    let latest = events.last().map_or(since, |e| e.seq);
    Json(EventsResponse { events, latest }).into_response()
}

/// Server-sent events: every event after `since`, then new ones as the
/// engine publishes them. Each SSE id is the event's sequence number.
async fn event_stream(State(s): State<Arc<Shared>>, Query(q): Query<EventsParams>) -> Response {
    let since = match cursor(&s, q.since.as_deref()) {
        Ok(c) => c,
        Err(e) => return e.into_response(),
    };
    Sse::new(follow(s, since))
        .keep_alive(KeepAlive::default())
        .into_response()
}

fn follow(s: Arc<Shared>, since: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = s.subscribe();
    let batches = stream::unfold((s, rx, since), |(s, mut rx, cursor)| async move {
        loop {
            let batch = s.events_after(cursor);
            if let Some(last) = batch.last() {
                let next = last.seq;
                return Some((batch, (s, rx, next)));
            }
            if s.is_closed() {
                return None;
            }
            rx.changed().await.ok()?;
        }
    });
    futures::StreamExt::flat_map(batches, |batch| {
        stream::iter(batch.into_iter().map(|e| {
            Ok(Event::default()
                .id(e.seq.to_string())
                .event(e.event.kind())
                .json_data(&e)
                .expect("events serialize"))
        }))
    })
}
