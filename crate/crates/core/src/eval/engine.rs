use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::method::Method;
use crate::adapters::{
    lora_param_count, projection_param_count, LoraAdapter, MergeSpec, ParamAccounting, ProjectionParams,
    NATIVE_BYTES,
};
use crate::error::{Error, Result};
use crate::model::{prompt_tokens, BaseModel, SiteDeltas};
use crate::tasks::{Lang, TaskKind, Vocab};

/// Merge hyper-parameters for the fixed-weight baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeSettings {
    pub weights: (f64, f64),
    pub ties_density: f64,
    pub max_new_tokens: usize,
}

impl Default for MergeSettings {
    fn default() -> Self {
        Self {
            weights: (0.5, 0.5),
            ties_density: 0.5,
            max_new_tokens: 24,
        }
    }
}

/// Everything the methods draw on. Optional parts are only needed by the
/// methods that use them.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub model: Arc<BaseModel>,
    /// Primary-task (summarisation) adapter.
    pub lora1: Option<LoraAdapter>,
    /// Secondary-task (translation) adapter for `lang`.
    pub lora2: Option<LoraAdapter>,
    pub joint: Option<LoraAdapter>,
    pub projection: Option<ProjectionParams>,
    pub lorahub: Option<Vec<f64>>,
    pub lang: Lang,
}

#[derive(Clone, Debug)]
struct Stage {
    task: TaskKind,
    deltas: SiteDeltas,
}

/// Output of one method on one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub output: String,
    /// First-pass output of two-step usage.
    pub intermediate: Option<String>,
    pub latency_seconds: f64,
    pub passes: u32,
}

/// Prepared methods over one frozen model. Merged deltas are computed
/// once, up front; the base weights are never modified.
pub struct Engine {
    model: Arc<BaseModel>,
    lang: Lang,
    settings: MergeSettings,
    stages: BTreeMap<Method, Vec<Stage>>,
    accounting: BTreeMap<Method, ParamAccounting>,
    summarize_only: Option<Stage>,
}

fn need<'a, T>(x: &'a Option<T>, method: Method, what: &str) -> Result<&'a T> {
    x.as_ref()
        .ok_or_else(|| Error::Config(format!("method {method} needs the {what}, which was not provided")))
}

impl Engine {
    pub fn new(artifacts: Artifacts, methods: &[Method], settings: MergeSettings) -> Result<Self> {
        if settings.max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        let Artifacts {
            model,
            lora1,
            lora2,
            joint,
            projection,
            lorahub,
            lang,
        } = artifacts;
        let config = model.config().clone();
        for a in [&lora1, &lora2, &joint].into_iter().flatten() {
            a.check_geometry(&config)?;
        }
        if let Some(p) = &projection {
            p.check_geometry(&config)?;
        }
        let compose = TaskKind::Compose(lang);
        let one = |deltas: SiteDeltas| vec![Stage { task: compose, deltas }];
        let (w1, w2) = settings.weights;
        let mut stages = BTreeMap::new();
        let mut accounting = BTreeMap::new();
        for &m in methods {
            let pair = || -> Result<(&LoraAdapter, &LoraAdapter)> {
                Ok((need(&lora1, m, "primary-task adapter")?, need(&lora2, m, "secondary-task adapter")?))
            };
            let merged = |spec: MergeSpec, proj: Option<&ProjectionParams>| -> Result<SiteDeltas> {
                let (a, b) = pair()?;
                spec.deltas(a, b, proj)
            };
            let (plan, extra) = match m {
                Method::ZeroShot => (one(SiteDeltas::new()), 0),
                Method::Lora1 => (one(need(&lora1, m, "primary-task adapter")?.deltas()?), 0),
                Method::Lora2 => (one(need(&lora2, m, "secondary-task adapter")?.deltas()?), 0),
                Method::Linear => (one(merged(MergeSpec::Linear { w1, w2 }, None)?), 0),
                Method::Concat => (one(merged(MergeSpec::Concat { w1, w2 }, None)?), 0),
                Method::Ties => {
                    let spec = MergeSpec::Ties {
                        w1,
                        w2,
                        density: settings.ties_density,
                    };
                    (one(merged(spec, None)?), 0)
                }
                Method::LoraHub => {
                    let c = need(&lorahub, m, "fitted LoraHub coefficients")?;
                    let spec = MergeSpec::LoraHub { coefficients: c.clone() };
                    (one(merged(spec, None)?), c.len() as u64)
                }
                Method::Projection => {
                    let p = need(&projection, m, "trained projection parameters")?;
                    (
                        one(merged(MergeSpec::Projection, Some(p))?),
                        projection_param_count(&config, p.rank),
                    )
                }
                Method::Joint => {
                    let j = need(&joint, m, "joint-expert adapter")?;
                    (one(j.deltas()?), lora_param_count(&config, j.hyper.rank))
                }
                Method::TwoStep => {
                    let (a, b) = pair()?;
                    (
                        vec![
                            Stage {
                                task: TaskKind::Summarize,
                                deltas: a.deltas()?,
                            },
                            Stage {
                                task: TaskKind::Translate(lang),
                                deltas: b.deltas()?,
                            },
                        ],
                        0,
                    )
                }
            };
            accounting.insert(m, ParamAccounting::new(extra, NATIVE_BYTES, m.inference_passes()));
            stages.insert(m, plan);
        }
        let summarize_only = match &lora1 {
            Some(a) => Some(Stage {
                task: TaskKind::Summarize,
                deltas: a.deltas()?,
            }),
            None => None,
        };
        Ok(Self {
            model,
            lang,
            settings,
            stages,
            accounting,
            summarize_only,
        })
    }

    pub fn model(&self) -> &BaseModel {
        &self.model
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn settings(&self) -> &MergeSettings {
        &self.settings
    }

    pub fn methods(&self) -> Vec<Method> {
        self.stages.keys().copied().collect()
    }

    pub fn accounting(&self, method: Method) -> Option<ParamAccounting> {
        self.accounting.get(&method).copied()
    }

    fn run_stage(&self, stage: &Stage, text: &str) -> Result<String> {
        let v = Vocab::global();
        let prompt = prompt_tokens(stage.task, text);
        let max = self.model.config().max_seq_len;
        if prompt.len() >= max {
            return Err(Error::ContextLength { len: prompt.len(), max: max - 1 });
        }
        let out = self
            .model
            .generate(&prompt, &stage.deltas, self.settings.max_new_tokens, v.eos())?;
        Ok(v.decode(&out))
    }

    fn run_stages(&self, stages: &[Stage], text: &str) -> Result<Inference> {
        let start = Instant::now();
        let mut current = text.to_string();
        let mut intermediate = None;
        for (i, stage) in stages.iter().enumerate() {
            if i > 0 {
                intermediate = Some(current.clone());
            }
            current = self.run_stage(stage, &current)?;
        }
        Ok(Inference {
            output: current,
            intermediate,
            latency_seconds: start.elapsed().as_secs_f64(),
            passes: stages.len() as u32,
        })
    }

    /// Runs `method` on `text`, timing tokenisation and generation.
    pub fn infer(&self, method: Method, text: &str) -> Result<Inference> {
        let stages = self
            .stages
            .get(&method)
            .ok_or_else(|| Error::Config(format!("method {method} is not prepared in this engine")))?;
        self.run_stages(stages, text)
    }

    /// Summary only, with the primary-task adapter.
    pub fn summarize(&self, text: &str) -> Result<Inference> {
        let stage = self
            .summarize_only
            .as_ref()
            .ok_or_else(|| Error::Config("summarising needs the primary-task adapter".into()))?;
        self.run_stages(std::slice::from_ref(stage), text)
    }
}
