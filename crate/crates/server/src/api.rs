//! Request and response bodies of the `/v1` API. Field names are part of
//! the public contract described in `api/openapi.json`.

use loracomp_core::eval::RougeScores;
use loracomp_core::tasks::Lang;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskMode {
    /// Summary only, with the primary-task adapter.
    #[serde(rename = "summarize-only")]
    SummarizeOnly,
    /// Translated summary with the selected composition method.
    #[default]
    #[serde(rename = "summarize-translate")]
    SummarizeTranslate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferRequest {
    pub text: String,
    pub method: String,
    #[serde(default)]
    pub task_mode: TaskMode,
    /// Target mapping (`es`, `de`); defaults to the first served one.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub compare: bool,
    /// Id from `/v1/dialogues/random`; enables ROUGE when `text` is that
    /// dialogue unchanged.
    #[serde(default)]
    pub example_id: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutput {
    pub method: String,
    pub label: String,
    pub output: String,
    pub intermediate: Option<String>,
    pub latency_seconds: f64,
    pub inference_passes: u32,
    pub rouge: Option<RougeScores>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub idle_bytes: u64,
    pub peak_bytes: u64,
    pub current_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub method: String,
    pub task_mode: TaskMode,
    pub target: Lang,
    pub output: String,
    pub intermediate: Option<String>,
    pub latency_seconds: f64,
    pub queue_seconds: f64,
    pub inference_passes: u32,
    pub rouge: Option<RougeScores>,
    pub comparisons: Option<Vec<MethodOutput>>,
    pub memory: MemoryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: usize,
    pub target: Lang,
    pub dialogue: String,
    pub summary: String,
    pub ground_truth: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub name: String,
    pub label: String,
    pub inference_passes: u32,
    pub additional_params: u64,
    pub bytes_per_param: u64,
    pub additional_storage_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodsResponse {
    pub target: Lang,
    pub methods: Vec<MethodInfo>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Loading,
    Ready,
    Failed,
    Stopping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: Status,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestCounters {
    pub total: u64,
    pub infer: u64,
    pub ok: u64,
    pub client_errors: u64,
    pub server_errors: u64,
    pub rejected_busy: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueStats {
    pub waiting: usize,
    pub capacity: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub status: Status,
    pub uptime_seconds: f64,
    pub memory: MemoryStats,
    pub requests: RequestCounters,
    pub queue: QueueStats,
}
