use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, SyncSender, TrySendError};
use std::sync::{Arc, Mutex, OnceLock};
use std::thread::JoinHandle;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use loracomp_core::eval::Method;
use loracomp_core::layout::ArtifactLayout;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tokio::sync::oneshot;

use crate::api::{Health, MemoryStats, Metrics, QueueStats, RequestCounters, Status};
use crate::config::ServerConfig;
use crate::error::{ApiError, ServerError};
use crate::memory::rss_and_peak;
use crate::service::{InferJob, Outcome, Service};

pub(crate) struct Job {
    pub infer: InferJob,
    pub enqueued: Instant,
    pub reply: oneshot::Sender<(Result<Outcome, ApiError>, f64)>,
}

#[derive(Default)]
pub(crate) struct Counters {
    pub total: AtomicU64,
    pub infer: AtomicU64,
    pub ok: AtomicU64,
    pub client_errors: AtomicU64,
    pub server_errors: AtomicU64,
    pub rejected_busy: AtomicU64,
}

/// Shared service state. Everything but the counters, memory readings and
/// emulator RNG is read-only once loading finishes.
pub struct AppState {
    pub(crate) config: ServerConfig,
    started: Instant,
    status: Mutex<Health>,
    service: OnceLock<Arc<Service>>,
    sender: Mutex<Option<SyncSender<Job>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
    initialized: AtomicBool,
    pub(crate) waiting: Arc<AtomicUsize>,
    pub(crate) counters: Counters,
    idle_bytes: AtomicU64,
    peak_bytes: AtomicU64,
    pub(crate) emulator_rng: Mutex<ChaCha8Rng>,
    log: Mutex<Option<BufWriter<File>>>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Result<Arc<Self>, ServerError> {
        config.validate()?;
        Ok(Arc::new(Self {
            emulator_rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            config,
            started: Instant::now(),
            status: Mutex::new(Health {
                status: Status::Loading,
                error: None,
            }),
            service: OnceLock::new(),
            sender: Mutex::new(None),
            worker: Mutex::new(None),
            initialized: AtomicBool::new(false),
            waiting: Arc::new(AtomicUsize::new(0)),
            counters: Counters::default(),
            idle_bytes: AtomicU64::new(0),
            peak_bytes: AtomicU64::new(0),
            log: Mutex::new(None),
        }))
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    /// Checks the artifact directory, then loads the model on the worker
    /// thread. Returns immediately; `/v1/health` reports progress.
    pub fn init(self: &Arc<Self>) -> Result<(), ServerError> {
        self.init_with(Service::load)
    }

    /// [`init`](Self::init) with a custom loader, which runs on the worker
    /// thread before it starts serving the queue.
    pub fn init_with<F>(self: &Arc<Self>, load: F) -> Result<(), ServerError>
    where
        F: FnOnce(&ServerConfig) -> Result<Service, ServerError> + Send + 'static,
    {
        if self.initialized.swap(true, Ordering::SeqCst) {
            return Err(ServerError::AlreadyInitialized);
        }
        let missing = ArtifactLayout::new(&self.config.artifacts).missing(&self.config.langs, &Method::ALL, true);
        if !missing.is_empty() {
            self.initialized.store(false, Ordering::SeqCst);
            return Err(ServerError::MissingArtifacts(missing));
        }
        if let Some(path) = &self.config.request_log {
            let file = OpenOptions::new().create(true).append(true).open(path)?;
            *self.log.lock().expect("log lock") = Some(BufWriter::new(file));
        }
        let (tx, rx) = mpsc::sync_channel::<Job>(self.config.queue_depth);
        *self.sender.lock().expect("sender lock") = Some(tx);
        let state = Arc::clone(self);
        let handle = std::thread::Builder::new()
            .name("loracomp-inference".into())
            .spawn(move || {
                match load(&state.config) {
                    Ok(service) => {
                        let service = Arc::new(service);
                        let _ = state.service.set(service.clone());
                        let (rss, hwm) = rss_and_peak();
                        state.idle_bytes.store(rss, Ordering::SeqCst);
                        state.peak_bytes.fetch_max(hwm.max(rss), Ordering::SeqCst);
                        state.set_status(Status::Ready, None);
                        tracing::info!(idle_bytes = rss, "service ready");
                        for job in rx {
                            state.waiting.fetch_sub(1, Ordering::SeqCst);
                            let queued = job.enqueued.elapsed().as_secs_f64();
                            let result = service.run(&job.infer);
                            let _ = job.reply.send((result, queued));
                        }
                    }
                    Err(e) => {
                        tracing::error!(error = %e, "loading failed");
                        state.set_status(Status::Failed, Some(e.to_string()));
                        for job in rx {
                            state.waiting.fetch_sub(1, Ordering::SeqCst);
                            let _ = job.reply.send((Err(ApiError::unavailable("service failed to load")), 0.0));
                        }
                    }
                }
            })?;
        *self.worker.lock().expect("worker lock") = Some(handle);
        Ok(())
    }

    fn set_status(&self, status: Status, error: Option<String>) {
        let mut h = self.status.lock().expect("status lock");
        if h.status != Status::Stopping {
            *h = Health { status, error };
        }
    }

    pub fn health(&self) -> Health {
        self.status.lock().expect("status lock").clone()
    }

    /// The loaded service, if loading has finished.
    pub fn service(&self) -> Option<&Arc<Service>> {
        self.service.get()
    }

    pub(crate) fn ready(&self) -> Result<&Arc<Service>, ApiError> {
        let health = self.health();
        match health.status {
            Status::Ready => self.service().ok_or_else(|| ApiError::internal("ready without a service")),
            Status::Loading => Err(ApiError::unavailable("the model is still loading")),
            Status::Stopping => Err(ApiError::unavailable("the service is shutting down")),
            Status::Failed => Err(ApiError::unavailable(format!(
                "the service failed to load: {}",
                health.error.unwrap_or_default()
            ))),
        }
    }

    /// Enqueues a job; fails with 503 when the queue is full or closed.
    pub(crate) fn submit(&self, job: Job) -> Result<(), ApiError> {
        let sender = self.sender.lock().expect("sender lock").clone();
        let Some(sender) = sender else {
            return Err(ApiError::unavailable("the service is shutting down"));
        };
        self.waiting.fetch_add(1, Ordering::SeqCst);
        match sender.try_send(job) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.waiting.fetch_sub(1, Ordering::SeqCst);
                match e {
                    TrySendError::Full(_) => {
                        self.counters.rejected_busy.fetch_add(1, Ordering::SeqCst);
                        Err(ApiError::new(
                            axum::http::StatusCode::SERVICE_UNAVAILABLE,
                            "busy",
                            format!("the inference queue is full ({} waiting)", self.config.queue_depth),
                        )
                        .with("queue_capacity", json!(self.config.queue_depth)))
                    }
                    TrySendError::Disconnected(_) => Err(ApiError::unavailable("the service is shutting down")),
                }
            }
        }
    }

    pub fn memory(&self) -> MemoryStats {
        let (rss, hwm) = rss_and_peak();
        let peak = self.peak_bytes.fetch_max(rss.max(hwm), Ordering::SeqCst).max(rss.max(hwm));
        MemoryStats {
            idle_bytes: self.idle_bytes.load(Ordering::SeqCst),
            peak_bytes: peak,
            current_bytes: rss,
        }
    }

    pub fn counters(&self) -> RequestCounters {
        let c = &self.counters;
        let l = |a: &AtomicU64| a.load(Ordering::SeqCst);
        RequestCounters {
            total: l(&c.total),
            infer: l(&c.infer),
            ok: l(&c.ok),
            client_errors: l(&c.client_errors),
            server_errors: l(&c.server_errors),
            rejected_busy: l(&c.rejected_busy),
        }
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            status: self.health().status,
            uptime_seconds: self.started.elapsed().as_secs_f64(),
            memory: self.memory(),
            requests: self.counters(),
            queue: QueueStats {
                waiting: self.waiting.load(Ordering::SeqCst),
                capacity: self.config.queue_depth,
            },
        }
    }

    pub(crate) fn log_request(&self, method: &str, path: &str, status: u16, seconds: f64) {
        let mut log = self.log.lock().expect("log lock");
        let Some(w) = log.as_mut() else { return };
        let ts = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let line = json!({
            "ts_unix": ts,
            "method": method,
            "path": path,
            "status": status,
            "duration_seconds": seconds,
        });
        if writeln!(w, "{line}").and_then(|_| w.flush()).is_err() {
            tracing::warn!("could not write the request log");
        }
    }

    /// Stops accepting jobs, lets the worker finish everything already
    /// queued, and waits for it. Returns the number of jobs that were
    /// waiting when the queue closed. Blocks; call it off the async runtime.
    pub fn shutdown(&self) -> usize {
        self.status.lock().expect("status lock").status = Status::Stopping;
        let pending = self.waiting.load(Ordering::SeqCst);
        drop(self.sender.lock().expect("sender lock").take());
        if let Some(handle) = self.worker.lock().expect("worker lock").take() {
            let _ = handle.join();
        }
        pending
    }
}
