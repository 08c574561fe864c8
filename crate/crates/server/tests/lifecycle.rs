mod common;

use std::sync::mpsc;
use std::time::{Duration, Instant};

use common::{config_for, serve, start_with, write_artifacts};
use loracomp_core::layout::ArtifactLayout;
use loracomp_core::tasks::{Lang, TaskKind};
use loracomp_server::api::{Health, Status};
use loracomp_server::{AppState, ServerConfig, ServerError, Service};
use reqwest::StatusCode;
use serde_json::{json, Value};

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn health_reports_loading_then_ready_without_blocking() {
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(dir.path(), &[Lang::Es]);
    let mut config = config_for(dir.path());
    config.langs = vec![Lang::Es];
    let state = AppState::new(config).unwrap();
    let (release, gate) = mpsc::channel::<()>();
    state
        .init_with(move |c| {
            gate.recv().unwrap();
            Service::load(c)
        })
        .unwrap();
    let s = serve(state, Some(dir)).await;

    for _ in 0..3 {
        let t = Instant::now();
        let h: Health = s.get("/v1/health").await.json().await.unwrap();
        assert_eq!(h.status, Status::Loading);
        assert!(t.elapsed() < Duration::from_secs(2), "health blocked while loading");
    }
    let r = s.post("/v1/infer", &json!({"text": "anna: hola", "method": "linear"})).await;
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(s.get("/v1/methods").await.status(), StatusCode::SERVICE_UNAVAILABLE);
    let m: Value = s.get("/v1/metrics").await.json().await.unwrap();
    assert_eq!(m["status"], "loading");

    release.send(()).unwrap();
    s.wait_ready().await;
    let r = s.post("/v1/infer", &json!({"text": "anna: hola", "method": "linear"})).await;
    assert_eq!(r.status(), StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn second_init_is_rejected() {
    let s = start_with(|_| {}).await;
    assert!(matches!(s.state.init(), Err(ServerError::AlreadyInitialized)));
    assert_eq!(s.state.health().status, Status::Ready);
}

#[test]
fn startup_lists_every_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(dir.path(), &[Lang::Es]);
    let layout = ArtifactLayout::new(dir.path());
    std::fs::remove_file(layout.projection(Lang::Es)).unwrap();
    let state = AppState::new(config_for(dir.path())).unwrap();
    let err = state.init().unwrap_err();
    let ServerError::MissingArtifacts(paths) = &err else {
        panic!("unexpected error {err}");
    };
    let expected = [
        layout.projection(Lang::Es),
        layout.lora(TaskKind::Translate(Lang::De)),
        layout.joint(Lang::De),
        layout.projection(Lang::De),
        layout.lorahub(Lang::De),
        layout.dataset(TaskKind::Compose(Lang::De)),
    ];
    for p in &expected {
        assert!(paths.contains(p), "{} not reported in {err}", p.display());
    }
    assert_eq!(paths.len(), expected.len());
    // A failed init can be retried once the files exist.
    write_artifacts(dir.path(), &[Lang::Es, Lang::De]);
    state.init().unwrap();
}

fn compare_body() -> Value {
    json!({"text": "anna: hola , bob ? gracias . bob: ver playa", "method": "projection", "compare": true})
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn full_queue_rejects_with_503_and_order_does_not_change_outputs() {
    let s = start_with(|c| c.queue_depth = 1).await;
    let reference: Value = s.post("/v1/infer", &compare_body()).await.json().await.unwrap();
    let sends = (0..8).map(|_| {
        let (client, url) = (s.client.clone(), s.url("/v1/infer"));
        tokio::spawn(async move { client.post(url).json(&compare_body()).send().await.unwrap() })
    });
    let mut busy = 0;
    for h in sends.collect::<Vec<_>>() {
        let r = h.await.unwrap();
        match r.status() {
            StatusCode::OK => {
                let v: Value = r.json().await.unwrap();
                assert_eq!(outputs(&v), outputs(&reference));
            }
            StatusCode::SERVICE_UNAVAILABLE => {
                let v: Value = r.json().await.unwrap();
                assert_eq!(v["error"], "busy");
                assert_eq!(v["queue_capacity"], 1);
                busy += 1;
            }
            other => panic!("unexpected status {other}"),
        }
    }
    assert!(busy > 0, "eight simultaneous requests never overflowed a queue of one");
    let m: Value = s.get("/v1/metrics").await.json().await.unwrap();
    assert_eq!(m["requests"]["rejected_busy"], json!(busy));
}

fn outputs(v: &Value) -> Vec<Value> {
    v["comparisons"].as_array().unwrap().iter().map(|c| c["output"].clone()).collect()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn shutdown_drains_queued_requests() {
    let s = start_with(|c| c.queue_depth = 8).await;
    let sends: Vec<_> = (0..6)
        .map(|_| {
            let (client, url) = (s.client.clone(), s.url("/v1/infer"));
            tokio::spawn(async move { client.post(url).json(&compare_body()).send().await.unwrap() })
        })
        .collect();
    let start = Instant::now();
    while s.state.metrics().queue.waiting == 0 {
        assert!(start.elapsed() < Duration::from_secs(30), "requests never queued");
        tokio::task::yield_now().await;
    }
    let state = s.state.clone();
    let drained = tokio::task::spawn_blocking(move || state.shutdown()).await.unwrap();
    assert!(drained >= 1);
    for h in sends {
        assert_eq!(h.await.unwrap().status(), StatusCode::OK);
    }
    let r = s.post("/v1/infer", &compare_body()).await;
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    let h: Health = s.get("/v1/health").await.json().await.unwrap();
    assert_eq!(h.status, Status::Stopping);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn requests_are_logged_as_json_lines() {
    let log_dir = tempfile::tempdir().unwrap();
    let path = log_dir.path().join("requests.jsonl");
    let p = path.clone();
    let s = start_with(move |c| c.request_log = Some(p)).await;
    s.get("/v1/metrics").await;
    s.post("/v1/infer", &json!({"text": "x", "method": "nope"})).await;
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let tail = &lines[lines.len() - 2..];
    assert_eq!(tail[0]["path"], "/v1/metrics");
    assert_eq!(tail[0]["status"], 200);
    assert_eq!(tail[1]["method"], "POST");
    assert_eq!(tail[1]["status"], 400);
    assert!(tail[1]["duration_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_file_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("server.toml");
    std::fs::write(&file, "port = 9001\nlangs = [\"de\"]\nqueue_depth = 3\n").unwrap();
    let mut c = ServerConfig::from_file(&file).unwrap();
    assert_eq!((c.port, c.queue_depth, c.langs.clone()), (9001, 3, vec![Lang::De]));
    assert_eq!(c.seed, ServerConfig::default().seed);
    c.apply_env([
        ("LORACOMP_PORT", "9100"),
        ("LORACOMP_SEED", "42"),
        ("LORACOMP_QUEUE_DEPTH", "5"),
        ("LORACOMP_ARTIFACTS", "/srv/art"),
        ("LORACOMP_LANGS", "es, de"),
        ("HOME", "/root"),
    ])
    .unwrap();
    assert_eq!((c.port, c.seed, c.queue_depth), (9100, 42, 5));
    assert_eq!(c.artifacts, std::path::PathBuf::from("/srv/art"));
    assert_eq!(c.langs, vec![Lang::Es, Lang::De]);
    assert!(c.apply_env([("LORACOMP_PORT", "http")]).is_err());
    std::fs::write(&file, "port = 1\nthreads = 4\n").unwrap();
    assert!(ServerConfig::from_file(&file).is_err());
    c.queue_depth = 0;
    assert!(c.validate().is_err());
}
