use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::method::Method;
use super::rouge::{mean_scores, score, RougeScores};
use crate::error::{Error, Result};
use crate::tasks::Example;

/// Mean and population standard deviation of latency samples, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Timing {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n: samples.len(),
        }
    }
}

/// Per-example results of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: Method,
    pub outputs: Vec<String>,
    pub scores: Vec<RougeScores>,
    pub latencies: Vec<f64>,
}

/// Runs `method` over `examples`, one timed inference per example.
pub fn run_method(engine: &Engine, method: Method, examples: &[Example]) -> Result<MethodRun> {
    let mut run = MethodRun {
        method,
        outputs: Vec::with_capacity(examples.len()),
        scores: Vec::with_capacity(examples.len()),
        latencies: Vec::with_capacity(examples.len()),
    };
    for e in examples {
        let inf = engine.infer(method, &e.input)?;
        run.scores.push(score(&inf.output, &e.target));
        run.outputs.push(inf.output);
        run.latencies.push(inf.latency_seconds);
    }
    Ok(run)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub label: String,
    pub rouge: RougeScores,
    pub latency: Timing,
    pub inference_passes: u32,
    pub additional_params: u64,
    pub additional_storage_bytes: u64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub timestamp_unix: u64,
    pub n_examples: usize,
    pub target_lang: String,
    /// How ROUGE was computed.
    pub rouge_variant: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

pub const ROUGE_VARIANT: &str = "F1; lowercased whitespace tokens; no stemming";

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Evaluates `methods` (registry order) on the same examples.
pub fn compare_all(engine: &Engine, methods: &[Method], examples: &[Example], seed: u64) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Contract("evaluation needs at least one example".into()));
    }
    let mut ordered: Vec<Method> = methods.to_vec();
    ordered.sort();
    ordered.dedup();
    let mut rows = Vec::with_capacity(ordered.len());
    for m in ordered {
        let run = run_method(engine, m, examples)?;
        let acc = engine
            .accounting(m)
            .ok_or_else(|| Error::Config(format!("method {m} is not prepared in this engine")))?;
        tracing::info!(method = m.name(), "evaluated");
        rows.push(ReportRow {
            method: m,
            label: m.label().to_string(),
            rouge: mean_scores(&run.scores),
            latency: Timing::from_samples(&run.latencies),
            inference_passes: acc.inference_passes,
            additional_params: acc.additional_params,
            additional_storage_bytes: acc.additional_storage_bytes,
            n: examples.len(),
        });
    }
    Ok(EvalReport {
        meta: ReportMeta {
            seed,
            timestamp_unix: now_unix(),
            n_examples: examples.len(),
            target_lang: engine.lang().code().to_string(),
            rouge_variant: ROUGE_VARIANT.to_string(),
        },
        rows,
    })
}

impl EvalReport {
    pub fn row(&self, method: Method) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// ROUGE (in %) and efficiency columns as an aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>8} {:>8} {:>8} {:>6} {:>10} {:>12} {:>18}",
            "Method", "ROUGE-1", "ROUGE-2", "ROUGE-L", "Passes", "Add.params", "Add.storage", "Latency (s)"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<22} {:>8.2} {:>8.2} {:>8.2} {:>5}x {:>10} {:>12} {:>18}",
                r.label,
                100.0 * r.rouge.rouge1_f,
                100.0 * r.rouge.rouge2_f,
                100.0 * r.rouge.rouge_l_f,
                r.inference_passes,
                r.additional_params,
                human_bytes(r.additional_storage_bytes),
                format!("{:.4} ± {:.4}", r.latency.mean, r.latency.std),
            );
        }
        let _ = writeln!(
            out,
            "n={} seed={} lang={} rouge: {}",
            self.meta.n_examples, self.meta.seed, self.meta.target_lang, self.meta.rouge_variant
        );
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,rouge1_f,rouge2_f,rougeL_f,latency_mean_s,latency_std_s,inference_passes,additional_params,additional_storage_bytes,n\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.method,
                r.rouge.rouge1_f,
                r.rouge.rouge2_f,
                r.rouge.rouge_l_f,
                r.latency.mean,
                r.latency.std,
                r.inference_passes,
                r.additional_params,
                r.additional_storage_bytes,
                r.n
            );
        }
        out
    }
}

pub fn human_bytes(b: u64) -> String {
    match b {
        0 => "0B".into(),
        b if b < 1024 => format!("{b}B"),
        b if b < 1024 * 1024 => format!("{:.1}KB", b as f64 / 1024.0),
        b => format!("{:.1}MB", b as f64 / (1024.0 * 1024.0)),
    }
}

/// `round(fraction·n)` examples (at least one) chosen by a seeded shuffle.
pub fn subset(examples: &[Example], fraction: f64, seed: u64) -> Result<Vec<Example>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("subset fraction {fraction} outside (0, 1]")));
    }
    if examples.is_empty() {
        return Err(Error::Contract("cannot take a subset of no examples".into()));
    }
    let k = ((fraction * examples.len() as f64).round() as usize).clamp(1, examples.len());
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| examples[i].clone()).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Method,
    pub label: String,
    pub latency: Timing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_examples: usize,
    pub rows: Vec<BenchRow>,
}

/// Latency of each method on the same examples.
pub fn bench(engine: &Engine, methods: &[Method], examples: &[Example]) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &m in methods {
        let run = run_method(engine, m, examples)?;
        rows.push(BenchRow {
            method: m,
            label: m.label().to_string(),
            latency: Timing::from_samples(&run.latencies),
        });
    }
    Ok(BenchReport {
        n_examples: examples.len(),
        rows,
    })
}

impl BenchReport {
    pub fn row(&self, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<22} {:>12} {:>12} {:>6}\n", "Method", "Mean (s)", "Std (s)", "n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<22} {:>12.5} {:>12.5} {:>6}",
                r.label, r.latency.mean, r.latency.std, r.latency.n
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,latency_mean_s,latency_std_s,n\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.method, r.latency.mean, r.latency.std, r.latency.n);
        }
        out
    }
}
