mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::{small_config, start, Running};
use loracomp_core::adapters::{lora_param_count, projection_param_count};
use loracomp_core::eval::{run_method, Engine, MergeSettings, Method};
use loracomp_core::layout::ArtifactLayout;
use loracomp_core::model::BaseModel;
use loracomp_core::tasks::{split_of, Lang, Split, TaskKind};
use loracomp_server::OPENAPI;
use reqwest::StatusCode;
use serde_json::{json, Value};

fn spec() -> Value {
    serde_json::from_str(OPENAPI).unwrap()
}

fn schema(name: &str) -> Value {
    spec()["components"]["schemas"][name].clone()
}

/// Checks that `value` has exactly the documented fields of `name`,
/// following `$ref`s into nested objects and arrays.
fn assert_shape(name: &str, value: &Value) {
    let s = schema(name);
    let props = s["properties"].as_object().unwrap_or_else(|| panic!("{name} has no properties"));
    let obj = value.as_object().unwrap_or_else(|| panic!("{name}: expected an object, got {value}"));
    let documented: BTreeSet<&str> = props.keys().map(String::as_str).collect();
    let actual: BTreeSet<&str> = obj.keys().map(String::as_str).collect();
    assert_eq!(actual, documented, "fields of {name}");
    for (field, prop) in props {
        let v = &obj[field];
        if v.is_null() {
            assert!(prop["nullable"] == json!(true), "{name}.{field} is null but not nullable");
            continue;
        }
        let target = prop.get("$ref").or_else(|| prop.get("items").and_then(|i| i.get("$ref")));
        let Some(r) = target.and_then(Value::as_str) else { continue };
        let inner = r.rsplit('/').next().unwrap();
        if schema(inner).get("properties").is_none() {
            if let Some(allowed) = schema(inner)["enum"].as_array() {
                assert!(allowed.contains(v), "{name}.{field} = {v} is not in the documented enum");
            }
            continue;
        }
        match v.as_array() {
            Some(items) => items.iter().for_each(|item| assert_shape(inner, item)),
            None => assert_shape(inner, v),
        }
    }
}

async fn json_of(resp: reqwest::Response, status: StatusCode) -> Value {
    assert_eq!(resp.status(), status);
    resp.json().await.unwrap()
}

async fn dialogue(s: &Running, target: &str) -> Value {
    json_of(s.get(&format!("/v1/dialogues/random?target={target}")).await, StatusCode::OK).await
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn responses_match_the_frozen_description() {
    let s = start().await;
    let spec = spec();
    let documented: Vec<&str> = spec["components"]["schemas"]["MethodName"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(documented, Method::names());
    let paths: BTreeSet<String> = spec["paths"].as_object().unwrap().keys().cloned().collect();
    assert_eq!(
        paths,
        ["/v1/health", "/v1/infer", "/v1/dialogues/random", "/v1/methods", "/v1/metrics"]
            .map(String::from)
            .into()
    );

    assert_shape("Health", &json_of(s.get("/v1/health").await, StatusCode::OK).await);
    assert_shape("Metrics", &json_of(s.get("/v1/metrics").await, StatusCode::OK).await);
    assert_shape("MethodsResponse", &json_of(s.get("/v1/methods").await, StatusCode::OK).await);
    let d = dialogue(&s, "es").await;
    assert_shape("Dialogue", &d);
    let single = json!({"text": d["dialogue"], "method": "projection", "example_id": d["id"]});
    let r = json_of(s.post("/v1/infer", &single).await, StatusCode::OK).await;
    assert_shape("InferResponse", &r);
    assert!(r["rouge"].is_object(), "emulator input should be scored");
    let cmp = json!({"text": d["dialogue"], "method": "linear", "compare": true, "target": "es"});
    let r = json_of(s.post("/v1/infer", &cmp).await, StatusCode::OK).await;
    assert_shape("InferResponse", &r);
    let bad = json_of(s.post("/v1/infer", &json!({"text": "hi", "method": "foo"})).await, StatusCode::BAD_REQUEST).await;
    assert_shape_error(&bad);
}

fn assert_shape_error(v: &Value) {
    let props = schema("Error")["properties"].as_object().unwrap().clone();
    for k in v.as_object().unwrap().keys() {
        assert!(props.contains_key(k), "undocumented error field {k}");
    }
    assert!(v["error"].is_string() && v["detail"].is_string());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn invalid_requests_get_the_documented_errors() {
    let s = start().await;
    let r = json_of(s.post("/v1/infer", &json!({"text": "anna: hola .", "method": "foo"})).await, StatusCode::BAD_REQUEST).await;
    assert_eq!(r["error"], "unknown method");
    assert_eq!(r["allowed"], json!(Method::names()));

    let r = json_of(
        s.post("/v1/infer", &json!({"text": "anna: hi", "method": "linear", "target": "fr"})).await,
        StatusCode::BAD_REQUEST,
    )
    .await;
    assert_eq!(r["allowed"], json!(["es", "de"]));

    let long = vec!["word"; 200].join(" ");
    let r = json_of(s.post("/v1/infer", &json!({"text": long, "method": "linear"})).await, StatusCode::PAYLOAD_TOO_LARGE).await;
    assert_eq!(r["max_tokens"], json!(small_config().max_seq_len - 4));
    assert_eq!(r["tokens"], json!(200));

    let r = s.post("/v1/infer", &json!({"text": "   ", "method": "linear"})).await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = s
        .post("/v1/infer", &json!({"text": "a b", "method": "linear", "compare": true, "task_mode": "summarize-only"}))
        .await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let r = s.post("/v1/infer", &json!({"text": "a b"})).await;
    assert!(r.status().is_client_error());
    for e in [s.get("/v1/methods?target=xx").await, s.get("/v1/dialogues/random?target=xx").await] {
        assert_eq!(e.status(), StatusCode::BAD_REQUEST);
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn served_outputs_equal_the_offline_engine_and_repeat_exactly() {
    let s = start().await;
    let layout = ArtifactLayout::new(&s.state.config().artifacts);
    let mut model = BaseModel::load(layout.base()).unwrap();
    model.freeze();
    let artifacts = layout.load_artifacts(model.into(), Lang::De, &Method::ALL).unwrap();
    let engine = Engine::new(artifacts, &Method::ALL, MergeSettings::default()).unwrap();
    let data = split_of(&layout.load_dataset(TaskKind::Compose(Lang::De)).unwrap(), Split::Test);
    let ex = &data[3];
    for m in Method::ALL {
        let body = json!({"text": ex.input, "method": m.name(), "target": "de"});
        let a = json_of(s.post("/v1/infer", &body).await, StatusCode::OK).await;
        let b = json_of(s.post("/v1/infer", &body).await, StatusCode::OK).await;
        let offline = run_method(&engine, m, std::slice::from_ref(ex)).unwrap();
        assert_eq!(a["output"], json!(offline.outputs[0]), "{m}");
        assert_eq!(a["output"], b["output"]);
        assert_eq!(a["inference_passes"], json!(m.inference_passes()));
        assert!(a["latency_seconds"].as_f64().unwrap() >= 0.0);
    }
    let sum = json!({"text": ex.input, "method": "projection", "task_mode": "summarize-only", "target": "de"});
    let r = json_of(s.post("/v1/infer", &sum).await, StatusCode::OK).await;
    assert_eq!(r["output"], json!(engine.summarize(&ex.input).unwrap().output));
    assert_eq!(r["method"], "lora1");

    let cmp = json!({"text": ex.input, "method": "ties", "compare": true, "target": "de"});
    let r = json_of(s.post("/v1/infer", &cmp).await, StatusCode::OK).await;
    let names: Vec<&str> = r["comparisons"].as_array().unwrap().iter().map(|c| c["method"].as_str().unwrap()).collect();
    assert_eq!(names, Method::names());
    assert_eq!(r["method"], "ties");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn dialogue_emulator_is_seeded_and_truthful() {
    let a = start().await;
    let b = start().await;
    let layout = ArtifactLayout::new(&a.state.config().artifacts);
    let test = split_of(&layout.load_dataset(TaskKind::Compose(Lang::Es)).unwrap(), Split::Test);
    let mut ids = Vec::new();
    for _ in 0..10 {
        let (x, y) = (dialogue(&a, "es").await, dialogue(&b, "es").await);
        assert_eq!(x, y);
        let id = x["id"].as_u64().unwrap() as usize;
        assert_eq!(x["dialogue"], json!(test[id].input));
        let text = x["dialogue"].as_str().unwrap();
        assert_eq!(x["ground_truth"], json!(TaskKind::Compose(Lang::Es).apply(text)));
        assert_eq!(x["summary"], json!(TaskKind::Summarize.apply(text)));
        ids.push(id);
    }
    assert!(ids.iter().collect::<BTreeSet<_>>().len() > 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn method_registry_reports_parameter_accounting() {
    let s = start().await;
    let r = json_of(s.get("/v1/methods?target=de").await, StatusCode::OK).await;
    assert_eq!(r["target"], "de");
    let rows = r["methods"].as_array().unwrap();
    assert_eq!(rows.len(), Method::ALL.len());
    let row = |name: &str| rows.iter().find(|m| m["name"] == name).unwrap().clone();
    let config = small_config();
    assert_eq!(row("projection")["inference_passes"], 1);
    assert_eq!(row("projection")["additional_params"], json!(projection_param_count(&config, 2)));
    assert_eq!(row("joint")["additional_params"], json!(lora_param_count(&config, 4)));
    assert_eq!(row("lorahub")["additional_params"], 2);
    assert_eq!(row("two-step")["inference_passes"], 2);
    for m in rows {
        let p = m["additional_params"].as_u64().unwrap();
        assert_eq!(m["additional_storage_bytes"].as_u64().unwrap(), p * m["bytes_per_param"].as_u64().unwrap());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn metrics_track_memory_and_requests() {
    let s = start().await;
    let m0: Value = s.get("/v1/metrics").await.json().await.unwrap();
    let idle = m0["memory"]["idle_bytes"].as_u64().unwrap();
    assert!(idle > 0);
    assert!(idle <= m0["memory"]["peak_bytes"].as_u64().unwrap());
    let mut last = m0;
    for i in 0..5 {
        let body = json!({"text": "anna: hola", "method": Method::ALL[i].name()});
        assert_eq!(s.post("/v1/infer", &body).await.status(), StatusCode::OK);
        let m: Value = s.get("/v1/metrics").await.json().await.unwrap();
        // The previous metrics call itself is counted once it completes.
        assert_eq!(m["requests"]["total"].as_u64().unwrap(), last["requests"]["total"].as_u64().unwrap() + 2);
        assert_eq!(m["requests"]["infer"].as_u64().unwrap(), last["requests"]["infer"].as_u64().unwrap() + 1);
        assert_eq!(m["memory"]["idle_bytes"].as_u64().unwrap(), idle);
        assert!(m["memory"]["peak_bytes"].as_u64() >= last["memory"]["peak_bytes"].as_u64());
        assert!(m["uptime_seconds"].as_f64() >= last["uptime_seconds"].as_f64());
        last = m;
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn base_weights_survive_a_hundred_mixed_requests() {
    let s = start().await;
    let before = s.state.service().unwrap().model().checksum();
    for i in 0..100 {
        let resp = match i % 5 {
            0 => s.get("/v1/methods").await,
            1 => s.get("/v1/dialogues/random?target=de").await,
            2 => s.get("/v1/metrics").await,
            _ => {
                let m = Method::ALL[i % Method::ALL.len()];
                let target = if i % 2 == 0 { "es" } else { "de" };
                s.post("/v1/infer", &json!({"text": "bob: hola , ana ? gracias", "method": m.name(), "target": target}))
                    .await
            }
        };
        assert_eq!(resp.status(), StatusCode::OK);
    }
    assert_eq!(s.state.service().unwrap().model().checksum(), before);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reported_latency_tracks_wall_time() {
    let s = start().await;
    let d = dialogue(&s, "es").await;
    let body = json!({"text": d["dialogue"], "method": "two-step"});
    let mut ok = 0;
    for _ in 0..5 {
        let t = Instant::now();
        let r = json_of(s.post("/v1/infer", &body).await, StatusCode::OK).await;
        let wall = t.elapsed().as_secs_f64();
        let reported = r["latency_seconds"].as_f64().unwrap() + r["queue_seconds"].as_f64().unwrap();
        if (reported - wall).abs() <= 0.2 * wall {
            ok += 1;
        }
    }
    assert!(ok >= 4, "latency outside ±20% of wall time in {} of 5 requests", 5 - ok);
}
