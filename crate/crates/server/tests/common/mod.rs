#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use loracomp_core::adapters::{LoraAdapter, LoraHubFit, LoraHyper, ProjectionParams};
use loracomp_core::layout::ArtifactLayout;
use loracomp_core::model::{BaseModel, ModelConfig};
use loracomp_core::tasks::{build_dataset, save_jsonl, Lang, SplitSizes, TaskKind};
use loracomp_core::Tensor;
use loracomp_server::api::{Health, Status};
use loracomp_server::{router, AppState, ServerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn small_config() -> ModelConfig {
    ModelConfig {
        d_model: 32,
        n_layers: 2,
        n_heads: 2,
        n_kv_heads: 1,
        mlp_dim: 64,
        ..ModelConfig::desk()
    }
}

/// Writes an untrained but complete artifact directory for `langs`.
pub fn write_artifacts(root: &Path, langs: &[Lang]) {
    let config = small_config();
    let layout = ArtifactLayout::new(root);
    let mut model = BaseModel::new(config.clone(), 1).unwrap();
    model.freeze();
    model.save(layout.base()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let hyper = LoraHyper {
        rank: 4,
        alpha: 8.0,
        dropout: 0.0,
    };
    let mut adapter = |task| {
        let mut a = LoraAdapter::init(&config, task, hyper.clone(), &mut rng).unwrap();
        for f in a.sites.values_mut() {
            f.b = Tensor::randn(f.b.shape(), 0.3, &mut rng);
        }
        a
    };
    adapter(TaskKind::Summarize).save(layout.lora(TaskKind::Summarize)).unwrap();
    for &lang in langs {
        adapter(TaskKind::Translate(lang)).save(layout.lora(TaskKind::Translate(lang))).unwrap();
        adapter(TaskKind::Compose(lang)).save(layout.joint(lang)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ProjectionParams::init(&config, 2, &mut rng);
        for t in p.tensors_mut() {
            *t = Tensor::randn(t.shape(), 0.5, &mut rng);
        }
        p.save(layout.projection(lang)).unwrap();
        let fit = LoraHubFit {
            coefficients: vec![0.6, 0.3],
            loss: 1.0,
            evaluations: 1,
        };
        layout.save_lorahub(lang, &fit).unwrap();
        let sizes = SplitSizes {
            train: 4,
            validation: 2,
            test: 12,
        };
        save_jsonl(layout.dataset(TaskKind::Compose(lang)), &build_dataset(TaskKind::Compose(lang), 5, sizes)).unwrap();
    }
}

pub struct Running {
    pub state: Arc<AppState>,
    pub addr: SocketAddr,
    pub client: reqwest::Client,
    pub _dir: Option<tempfile::TempDir>,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(self.url(path)).send().await.unwrap()
    }

    pub async fn post(&self, path: &str, body: &serde_json::Value) -> reqwest::Response {
        self.client.post(self.url(path)).json(body).send().await.unwrap()
    }

    pub async fn wait_ready(&self) {
        let start = Instant::now();
        loop {
            let h: Health = self.get("/v1/health").await.json().await.unwrap();
            match h.status {
                Status::Ready => return,
                Status::Failed => panic!("service failed: {:?}", h.error),
                _ => {}
            }
            assert!(start.elapsed() < Duration::from_secs(60), "service never became ready");
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    }
}

/// Serves `state` on an ephemeral port without initialising it.
pub async fn serve(state: Arc<AppState>, dir: Option<tempfile::TempDir>) -> Running {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Running {
        state,
        addr,
        client: reqwest::Client::new(),
        _dir: dir,
    }
}

pub fn config_for(root: &Path) -> ServerConfig {
    ServerConfig {
        artifacts: root.to_path_buf(),
        langs: vec![Lang::Es, Lang::De],
        seed: 7,
        ..ServerConfig::default()
    }
}

/// Fresh artifacts, initialised and ready.
pub async fn start_with(f: impl FnOnce(&mut ServerConfig)) -> Running {
    let dir = tempfile::tempdir().unwrap();
    write_artifacts(dir.path(), &[Lang::Es, Lang::De]);
    let mut config = config_for(dir.path());
    f(&mut config);
    let state = AppState::new(config).unwrap();
    state.init().unwrap();
    let running = serve(state, Some(dir)).await;
    running.wait_ready().await;
    running
}

pub async fn start() -> Running {
    start_with(|_| {}).await
}
