use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Query, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::Response;
use axum::routing::{get, post};
use axum::{Json, Router};
use loracomp_core::eval::Method;
use loracomp_core::tasks::{summarize, Lang, Vocab};
use rand::Rng;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::oneshot;

use crate::api::{
    Dialogue, Health, InferRequest, InferResponse, MethodInfo, MethodsResponse, Metrics, TaskMode,
};
use crate::app::{AppState, Job};
use crate::error::ApiError;
use crate::service::{InferJob, Service};

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/infer", post(infer))
        .route("/v1/dialogues/random", get(random_dialogue))
        .route("/v1/methods", get(methods))
        .route("/v1/metrics", get(metrics))
        .layer(middleware::from_fn_with_state(state.clone(), track))
        .with_state(state)
}

/// Counts and logs every request.
async fn track(State(state): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let start = Instant::now();
    let method = req.method().to_string();
    let path = req.uri().path().to_string();
    let resp = next.run(req).await;
    let status = resp.status();
    let c = &state.counters;
    c.total.fetch_add(1, Ordering::SeqCst);
    let bucket = if status.is_success() {
        &c.ok
    } else if status.is_client_error() {
        &c.client_errors
    } else {
        &c.server_errors
    };
    bucket.fetch_add(1, Ordering::SeqCst);
    let secs = start.elapsed().as_secs_f64();
    tracing::info!(%method, %path, status = status.as_u16(), seconds = secs, "request");
    state.log_request(&method, &path, status.as_u16(), secs);
    resp
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(state.health())
}

async fn metrics(State(state): State<Arc<AppState>>) -> Json<Metrics> {
    Json(state.metrics())
}

#[derive(Deserialize)]
struct TargetQuery {
    target: Option<String>,
}

fn resolve_target(service: &Service, target: Option<&str>) -> Result<Lang, ApiError> {
    let langs = service.langs();
    let allowed: Vec<&str> = langs.iter().map(|l| l.code()).collect();
    let Some(t) = target else {
        return Ok(langs[0]);
    };
    langs.iter().copied().find(|l| l.code() == t).ok_or_else(|| {
        ApiError::new(StatusCode::BAD_REQUEST, "unknown target", format!("unknown target mapping {t:?}"))
            .with("allowed", json!(allowed))
    })
}

async fn methods(
    State(state): State<Arc<AppState>>,
    Query(q): Query<TargetQuery>,
) -> Result<Json<MethodsResponse>, ApiError> {
    let service = state.ready()?;
    let lang = resolve_target(service, q.target.as_deref())?;
    let engine = service.engine(lang).ok_or_else(|| ApiError::internal("engine missing"))?;
    let methods = engine
        .methods()
        .into_iter()
        .filter_map(|m| {
            let a = engine.accounting(m)?;
            Some(MethodInfo {
                name: m.name().into(),
                label: m.label().into(),
                inference_passes: a.inference_passes,
                additional_params: a.additional_params,
                bytes_per_param: a.bytes_per_param,
                additional_storage_bytes: a.additional_storage_bytes,
            })
        })
        .collect();
    Ok(Json(MethodsResponse { target: lang, methods }))
}

async fn random_dialogue(
    State(state): State<Arc<AppState>>,
    Query(q): Query<TargetQuery>,
) -> Result<Json<Dialogue>, ApiError> {
    let service = state.ready()?;
    let lang = resolve_target(service, q.target.as_deref())?;
    let pool = service.dialogues(lang);
    let id = state.emulator_rng.lock().expect("rng lock").random_range(0..pool.len());
    let ex = &pool[id];
    Ok(Json(Dialogue {
        id,
        target: lang,
        dialogue: ex.input.clone(),
        summary: summarize(&ex.input),
        ground_truth: ex.target.clone(),
    }))
}

fn validate(service: &Service, req: InferRequest) -> Result<InferJob, ApiError> {
    let method: Method = req.method.parse().map_err(|_| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "unknown method",
            format!("unknown method {:?}", req.method),
        )
        .with("allowed", json!(Method::names()))
    })?;
    let lang = resolve_target(service, req.target.as_deref())?;
    let tokens = Vocab::global().encode(&req.text).len();
    if tokens == 0 {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty text", "text has no words"));
    }
    let max = service.max_input_tokens();
    if tokens > max {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "text too long",
            format!("text has {tokens} words, the limit is {max}"),
        )
        .with("max_tokens", json!(max))
        .with("tokens", json!(tokens)));
    }
    if req.compare && req.task_mode == TaskMode::SummarizeOnly {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad request",
            "compare needs task_mode summarize-translate",
        ));
    }
    Ok(InferJob {
        method,
        mode: req.task_mode,
        lang,
        text: req.text,
        compare: req.compare,
        example_id: req.example_id,
    })
}

async fn infer(
    State(state): State<Arc<AppState>>,
    Json(req): Json<InferRequest>,
) -> Result<Json<InferResponse>, ApiError> {
    state.counters.infer.fetch_add(1, Ordering::SeqCst);
    let service = state.ready()?;
    let job = validate(service, req)?;
    let (mode, lang) = (job.mode, job.lang);
    let (tx, rx) = oneshot::channel();
    state.submit(Job {
        infer: job,
        enqueued: Instant::now(),
        reply: tx,
    })?;
    let (result, queue_seconds) = rx
        .await
        .map_err(|_| ApiError::unavailable("the inference worker stopped"))?;
    let outcome = result?;
    let p = outcome.primary;
    Ok(Json(InferResponse {
        method: p.method,
        task_mode: mode,
        target: lang,
        output: p.output,
        intermediate: p.intermediate,
        latency_seconds: p.latency_seconds,
        queue_seconds,
        inference_passes: p.inference_passes,
        rouge: p.rouge,
        comparisons: outcome.comparisons,
        memory: state.memory(),
    }))
}
