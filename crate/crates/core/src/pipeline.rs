//! End-to-end stages over an [`ArtifactLayout`]: data generation,
//! pretraining, adapter and projection training, LoraHub fitting and
//! evaluation. Each stage checks its inputs exist before doing any work.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapters::{fit_lorahub, LoraAdapter, LoraHubFit, LoraHyper};
use crate::error::{Error, Result};
use crate::eval::{compare_all, Engine, EvalReport, MergeSettings, Method};
use crate::layout::ArtifactLayout;
use crate::model::{BaseModel, ModelConfig};
use crate::tasks::{build_dataset, save_jsonl, split_of, Example, Lang, Split, SplitSizes, TaskKind};
use crate::training::{
    pretrain_base, train_joint_expert, train_lora, train_projection, TrainConfig, TrainReport,
};

/// Every knob of a full run. All seeds derive from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub lang: Lang,
    pub sizes: SplitSizes,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    /// Held-out copy accuracy at which pretraining stops.
    pub pretrain_target: f64,
    pub hyper: LoraHyper,
    pub summarize: TrainConfig,
    pub translate: TrainConfig,
    pub joint: TrainConfig,
    pub projection: TrainConfig,
    pub projection_rank: usize,
    pub lorahub_budget: usize,
    /// Validation examples LoraHub is fitted on.
    pub lorahub_examples: usize,
    pub methods: Vec<Method>,
}

impl PipelineConfig {
    /// The desk-scale run.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            lang: Lang::Es,
            sizes: SplitSizes::default(),
            model: ModelConfig::desk(),
            pretrain: TrainConfig::desk_pretrain(),
            pretrain_target: 0.98,
            hyper: LoraHyper::desk(),
            summarize: TrainConfig::desk_lora(),
            translate: TrainConfig {
                epochs: 1,
                ..TrainConfig::desk_lora()
            },
            joint: TrainConfig::desk_joint(),
            projection: TrainConfig::desk_projection(),
            projection_rank: 4,
            lorahub_budget: 40,
            lorahub_examples: 32,
            methods: Method::ALL.to_vec(),
        }
        .reseeded(seed)
    }

    /// Sets every stage seed from `seed`.
    pub fn reseeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        let stages = [
            &mut self.pretrain,
            &mut self.summarize,
            &mut self.translate,
            &mut self.joint,
            &mut self.projection,
        ];
        for (i, cfg) in stages.into_iter().enumerate() {
            cfg.seed = stage_seed(seed, i as u64 + 1);
        }
        self
    }
}

/// Seed of stage `i`; stage 0 is data generation and model init.
pub fn stage_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(1000).wrapping_add(i)
}

fn require(paths: &[PathBuf]) -> Result<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).cloned().collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::MissingArtifacts(missing))
    }
}

fn load_base(layout: &ArtifactLayout) -> Result<BaseModel> {
    let mut model = BaseModel::load(layout.base())?;
    if !model.is_frozen() {
        return Err(Error::Contract(format!(
            "{} is not a finished pretraining run",
            layout.base().display()
        )));
    }
    model.freeze();
    Ok(model)
}

fn train_split(layout: &ArtifactLayout, task: TaskKind) -> Result<Vec<Example>> {
    let data = split_of(&layout.load_dataset(task)?, Split::Train);
    if data.is_empty() {
        return Err(Error::Contract(format!("{} has no training examples", layout.dataset(task).display())));
    }
    Ok(data)
}

/// Writes the primary, secondary and compositional datasets.
pub fn gen_data(layout: &ArtifactLayout, seed: u64, sizes: SplitSizes, langs: &[Lang]) -> Result<Vec<PathBuf>> {
    let mut tasks = vec![TaskKind::Summarize];
    for &l in langs {
        tasks.push(TaskKind::Translate(l));
        tasks.push(TaskKind::Compose(l));
    }
    let mut written = Vec::new();
    for task in tasks {
        let path = layout.dataset(task);
        save_jsonl(&path, &build_dataset(task, stage_seed(seed, 0), sizes))?;
        written.push(path);
    }
    Ok(written)
}

pub fn pretrain(
    layout: &ArtifactLayout,
    model: &ModelConfig,
    seed: u64,
    config: &TrainConfig,
    target: f64,
) -> Result<TrainReport> {
    model.validate()?;
    config.validate()?;
    let base = BaseModel::new(model.clone(), stage_seed(seed, 0))?;
    let (base, report) = pretrain_base(base, config, target)?;
    base.save(layout.base())?;
    Ok(report)
}

/// Trains a single-task adapter (summarisation or translation).
pub fn train_task_adapter(
    layout: &ArtifactLayout,
    task: TaskKind,
    hyper: &LoraHyper,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if !matches!(task, TaskKind::Summarize | TaskKind::Translate(_)) {
        return Err(Error::Config(format!("single-task adapters cover sum and trans-*, not {task}")));
    }
    require(&[layout.base(), layout.dataset(task)])?;
    let model = load_base(layout)?;
    let (adapter, report) = train_lora(&model, task, &train_split(layout, task)?, hyper.clone(), config)?;
    adapter.save(layout.lora(task))?;
    Ok(report)
}

pub fn train_joint(layout: &ArtifactLayout, lang: Lang, hyper: &LoraHyper, config: &TrainConfig) -> Result<TrainReport> {
    let task = TaskKind::Compose(lang);
    require(&[layout.base(), layout.dataset(task)])?;
    let model = load_base(layout)?;
    let (adapter, report) = train_joint_expert(&model, task, &train_split(layout, task)?, hyper.clone(), config)?;
    adapter.save(layout.joint(lang))?;
    Ok(report)
}

fn adapter_pair(layout: &ArtifactLayout, model: &BaseModel, lang: Lang) -> Result<(LoraAdapter, LoraAdapter)> {
    Ok((
        LoraAdapter::load_for(layout.lora(TaskKind::Summarize), model.config())?,
        LoraAdapter::load_for(layout.lora(TaskKind::Translate(lang)), model.config())?,
    ))
}

fn pair_inputs(layout: &ArtifactLayout, lang: Lang) -> Vec<PathBuf> {
    vec![
        layout.base(),
        layout.lora(TaskKind::Summarize),
        layout.lora(TaskKind::Translate(lang)),
        layout.dataset(TaskKind::Compose(lang)),
    ]
}

pub fn train_projection_stage(
    layout: &ArtifactLayout,
    lang: Lang,
    rank: usize,
    config: &TrainConfig,
) -> Result<TrainReport> {
    require(&pair_inputs(layout, lang))?;
    let model = load_base(layout)?;
    let (l1, l2) = adapter_pair(layout, &model, lang)?;
    let task = TaskKind::Compose(lang);
    let (proj, report) = train_projection(&model, &l1, &l2, task, &train_split(layout, task)?, rank, config)?;
    proj.save(layout.projection(lang))?;
    Ok(report)
}

/// Fits LoraHub coefficients on the first `examples` validation items.
pub fn fit_lorahub_stage(layout: &ArtifactLayout, lang: Lang, budget: usize, examples: usize) -> Result<LoraHubFit> {
    require(&pair_inputs(layout, lang))?;
    let model = load_base(layout)?;
    let (l1, l2) = adapter_pair(layout, &model, lang)?;
    let task = TaskKind::Compose(lang);
    let val = split_of(&layout.load_dataset(task)?, Split::Validation);
    let val = &val[..examples.min(val.len())];
    let fit = fit_lorahub(&model, &[&l1, &l2], task, val, budget)?;
    layout.save_lorahub(lang, &fit)?;
    Ok(fit)
}

/// Prepares an engine for `methods` from the artifact directory.
pub fn engine(layout: &ArtifactLayout, lang: Lang, methods: &[Method], settings: MergeSettings) -> Result<Engine> {
    let missing: Vec<PathBuf> = layout.required(lang, methods).into_iter().filter(|p| !p.exists()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingArtifacts(missing));
    }
    let model = Arc::new(load_base(layout)?);
    Engine::new(layout.load_artifacts(model, lang, methods)?, methods, settings)
}

/// Wall time of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub stages: Vec<StageTime>,
    pub pretrain: TrainReport,
    pub projection: TrainReport,
    pub lorahub: LoraHubFit,
    pub eval: EvalReport,
}

impl PipelineReport {
    pub fn total_seconds(&self) -> f64 {
        self.stages.iter().map(|s| s.seconds).sum()
    }
}

fn timed<T>(stages: &mut Vec<StageTime>, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f()?;
    let seconds = start.elapsed().as_secs_f64();
    tracing::info!(stage = name, seconds, "stage done");
    stages.push(StageTime {
        stage: name.to_string(),
        seconds,
    });
    Ok(out)
}

/// Runs every stage and evaluates on the compositional test split.
pub fn run(layout: &ArtifactLayout, config: &PipelineConfig) -> Result<PipelineReport> {
    let c = config;
    let mut st = Vec::new();
    timed(&mut st, "gen-data", || gen_data(layout, c.seed, c.sizes, &[c.lang]))?;
    let pretrain = timed(&mut st, "pretrain", || {
        pretrain(layout, &c.model, c.seed, &c.pretrain, c.pretrain_target)
    })?;
    timed(&mut st, "train-lora sum", || {
        train_task_adapter(layout, TaskKind::Summarize, &c.hyper, &c.summarize)
    })?;
    let trans = TaskKind::Translate(c.lang);
    timed(&mut st, &format!("train-lora {trans}"), || {
        train_task_adapter(layout, trans, &c.hyper, &c.translate)
    })?;
    if c.methods.contains(&Method::Joint) {
        timed(&mut st, "train-joint", || train_joint(layout, c.lang, &c.hyper, &c.joint))?;
    }
    let projection = timed(&mut st, "train-projection", || {
        train_projection_stage(layout, c.lang, c.projection_rank, &c.projection)
    })?;
    let lorahub = timed(&mut st, "fit-lorahub", || {
        fit_lorahub_stage(layout, c.lang, c.lorahub_budget, c.lorahub_examples)
    })?;
    let eval = timed(&mut st, "eval", || {
        let engine = engine(layout, c.lang, &c.methods, MergeSettings::default())?;
        let test = split_of(&layout.load_dataset(TaskKind::Compose(c.lang))?, Split::Test);
        compare_all(&engine, &c.methods, &test, c.seed)
    })?;
    Ok(PipelineReport {
        stages: st,
        pretrain,
        projection,
        lorahub,
        eval,
    })
}
