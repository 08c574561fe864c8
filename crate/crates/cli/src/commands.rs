use std::fs;
use std::path::{Path, PathBuf};

use loracomp_core::adapters::{LoraAdapter, LoraHubFit, LoraHyper, ProjectionParams};
use loracomp_core::eval::{bench, compare_all, human_bytes, subset, MergeSettings, Method};
use loracomp_core::layout::ArtifactLayout;
use loracomp_core::model::{BaseModel, ModelConfig};
use loracomp_core::pipeline::{self, stage_seed, PipelineConfig};
use loracomp_core::tasks::{build_dataset, load_jsonl, save_jsonl, DatasetStats, Example, Lang, Split, SplitSizes, TaskKind};
use loracomp_core::training::{TrainConfig, TrainReport};
use loracomp_server::{ServerConfig, ServerError};
use serde_json::json;

use crate::args::*;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] loracomp_core::Error),

    #[error(transparent)]
    Server(#[from] ServerError),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 0 is success, 2 a user or configuration error, 3 a broken internal
    /// invariant.
    pub fn exit_code(&self) -> i32 {
        let core = match self {
            CliError::Core(e) | CliError::Server(ServerError::Core(e)) => e,
            _ => return 2,
        };
        if core.is_user_error() {
            2
        } else {
            3
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(cli: &Cli) -> Result<()> {
    let layout = ArtifactLayout::new(cli.artifact_dir());
    let preset = PipelineConfig::desk(cli.seed());
    match &cli.command {
        Command::GenData(a) => gen_data(&layout, cli.seed(), a),
        Command::Pretrain(a) => pretrain(&layout, &preset, a),
        Command::TrainLora(a) => train_lora(&layout, &preset, a),
        Command::TrainJoint(a) => {
            let cfg = train_config(&preset.joint, &a.train);
            let report = pipeline::train_joint(&layout, a.lang, &hyper(&preset.hyper, &a.lora), &cfg)?;
            done(&layout.joint(a.lang), &report);
            Ok(())
        }
        Command::TrainProjection(a) => {
            let cfg = train_config(&preset.projection, &a.train);
            let rank = a.rank.unwrap_or(preset.projection_rank);
            let report = pipeline::train_projection_stage(&layout, a.lang, rank, &cfg)?;
            done(&layout.projection(a.lang), &report);
            Ok(())
        }
        Command::FitLorahub(a) => {
            let fit = pipeline::fit_lorahub_stage(
                &layout,
                a.lang,
                a.budget.unwrap_or(preset.lorahub_budget),
                a.examples.unwrap_or(preset.lorahub_examples),
            )?;
            println!(
                "wrote {} (coefficients {:?}, loss {:.4}, {} evaluations)",
                layout.lorahub(a.lang).display(),
                fit.coefficients,
                fit.loss,
                fit.evaluations
            );
            Ok(())
        }
        Command::Eval(a) => eval(&layout, cli.seed(), a),
        Command::Bench(a) => bench_cmd(&layout, cli.seed(), a),
        Command::Serve(a) => serve(cli, a),
        Command::Inspect(a) => inspect(&layout, a),
    }
}

fn train_config(preset: &TrainConfig, a: &TrainArgs) -> TrainConfig {
    let mut c = preset.clone();
    c.epochs = a.epochs.unwrap_or(c.epochs);
    c.lr = a.lr.unwrap_or(c.lr);
    c.batch_size = a.batch_size.unwrap_or(c.batch_size);
    c.max_examples = a.max_examples.or(c.max_examples);
    c.grad_clip = a.grad_clip.or(c.grad_clip);
    c.lr_decay = a.lr_decay.unwrap_or(c.lr_decay);
    c
}

fn hyper(preset: &LoraHyper, a: &LoraArgs) -> LoraHyper {
    let rank = a.rank.unwrap_or(preset.rank);
    let alpha = match (a.alpha, a.rank) {
        (Some(alpha), _) => alpha,
        (None, Some(r)) => preset.alpha * r as f64 / preset.rank as f64,
        (None, None) => preset.alpha,
    };
    LoraHyper {
        rank,
        alpha,
        dropout: a.dropout.unwrap_or(preset.dropout),
    }
}

fn done(path: &Path, report: &TrainReport) {
    let loss = report.smoothed_ends(50).map(|(_, end)| format!(", final loss {end:.4}")).unwrap_or_default();
    println!("wrote {} ({} steps{loss})", path.display(), report.steps());
}

fn gen_data(layout: &ArtifactLayout, seed: u64, a: &GenDataArgs) -> Result<()> {
    let sizes = SplitSizes {
        train: a.n,
        validation: a.validation,
        test: a.test,
    };
    if sizes.total() == 0 {
        return Err(CliError::Usage("nothing to generate: all split sizes are zero".into()));
    }
    let written = match a.task {
        Some(TaskKind::Copy) => {
            return Err(CliError::Usage("copy data is generated on the fly by pretrain".into()));
        }
        Some(task) => {
            let path = a.out.clone().unwrap_or_else(|| layout.dataset(task));
            save_jsonl(&path, &build_dataset(task, stage_seed(seed, 0), sizes))?;
            vec![path]
        }
        None => pipeline::gen_data(layout, seed, sizes, &[a.lang])?,
    };
    for p in written {
        println!("wrote {} ({} examples)", p.display(), sizes.total());
    }
    Ok(())
}

fn pretrain(layout: &ArtifactLayout, preset: &PipelineConfig, a: &PretrainArgs) -> Result<()> {
    let model = match &a.model_config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            toml::from_str::<ModelConfig>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => preset.model.clone(),
    };
    let target = a.target_accuracy.unwrap_or(preset.pretrain_target);
    if !(0.0..=1.0).contains(&target) {
        return Err(CliError::Usage(format!("target accuracy {target} outside [0, 1]")));
    }
    let cfg = train_config(&preset.pretrain, &a.train);
    let report = pipeline::pretrain(layout, &model, preset.seed, &cfg, target)?;
    let acc = report.eval_trace.last().map(|a| format!(", copy accuracy {a:.4}")).unwrap_or_default();
    println!("wrote {} ({} epochs{acc})", layout.base().display(), report.eval_trace.len());
    Ok(())
}

fn train_lora(layout: &ArtifactLayout, preset: &PipelineConfig, a: &TrainLoraArgs) -> Result<()> {
    let base = match a.task {
        TaskKind::Summarize => &preset.summarize,
        TaskKind::Translate(_) => &preset.translate,
        other => {
            return Err(CliError::Usage(format!(
                "train-lora covers sum and trans-<lang>; use train-joint for {other}"
            )))
        }
    };
    let cfg = train_config(base, &a.train);
    let report = pipeline::train_task_adapter(layout, a.task, &hyper(&preset.hyper, &a.lora), &cfg)?;
    done(&layout.lora(a.task), &report);
    Ok(())
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "all" => Ok(None),
        "train" => Ok(Some(Split::Train)),
        "validation" => Ok(Some(Split::Validation)),
        "test" => Ok(Some(Split::Test)),
        other => Err(CliError::Usage(format!(
            "unknown split {other:?} (expected train, validation, test or all)"
        ))),
    }
}

/// Checks every input exists, then loads the engine and the examples.
fn prepare(layout: &ArtifactLayout, a: &DataArgs) -> Result<(loracomp_core::eval::Engine, Vec<Method>, Vec<Example>)> {
    let methods = Method::parse_list(&a.methods)?;
    let split = parse_split(&a.split)?;
    let data = a.data.clone().unwrap_or_else(|| layout.dataset(TaskKind::Compose(a.lang)));
    let mut missing = layout.required(a.lang, &methods);
    missing.push(data.clone());
    missing.retain(|p| !p.exists());
    if !missing.is_empty() {
        return Err(loracomp_core::Error::MissingArtifacts(missing).into());
    }
    let mut examples = load_jsonl(&data)?;
    if let Some(s) = split {
        examples.retain(|e| e.split == s);
    }
    if examples.is_empty() {
        return Err(CliError::Usage(format!("{} has no {} examples", data.display(), a.split)));
    }
    let engine = pipeline::engine(layout, a.lang, &methods, MergeSettings::default())?;
    Ok((engine, methods, examples))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(loracomp_core::Error::from)?;
    }
    fs::write(path, text).map_err(loracomp_core::Error::from)?;
    Ok(())
}

fn eval(layout: &ArtifactLayout, seed: u64, a: &EvalArgs) -> Result<()> {
    let (engine, methods, examples) = prepare(layout, &a.data)?;
    let report = compare_all(&engine, &methods, &examples, seed)?;
    if let Some(p) = &a.out {
        write(p, &report.to_json()?)?;
    }
    if let Some(p) = &a.csv {
        write(p, &report.to_csv())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn bench_cmd(layout: &ArtifactLayout, seed: u64, a: &BenchArgs) -> Result<()> {
    let (engine, methods, examples) = prepare(layout, &a.data)?;
    let timed = subset(&examples, a.subset_fraction, seed)?;
    let report = bench(&engine, &methods, &timed)?;
    if let Some(p) = &a.out {
        write(p, &serde_json::to_string_pretty(&report).map_err(loracomp_core::Error::from)?)?;
    }
    if let Some(p) = &a.csv {
        write(p, &report.to_csv())?;
    }
    println!("timed {} of {} examples", timed.len(), examples.len());
    print!("{}", report.to_table());
    Ok(())
}

fn serve(cli: &Cli, a: &ServeArgs) -> Result<()> {
    let mut config = ServerConfig::load(a.config.as_deref())?;
    if let Some(dir) = &cli.artifacts {
        config.artifacts = dir.clone();
    }
    config.seed = cli.seed.unwrap_or(config.seed);
    config.host = a.host.clone().unwrap_or(config.host);
    config.port = a.port.unwrap_or(config.port);
    config.langs = a.langs.clone().unwrap_or(config.langs);
    config.queue_depth = a.queue_depth.unwrap_or(config.queue_depth);
    config.request_log = a.request_log.clone().or(config.request_log);
    config.validate()?;
    let runtime = tokio::runtime::Runtime::new().map_err(loracomp_core::Error::from)?;
    runtime.block_on(loracomp_server::run(config))?;
    Ok(())
}

fn inspect(layout: &ArtifactLayout, a: &InspectArgs) -> Result<()> {
    let value = match &a.path {
        Some(p) => describe(p)?,
        None => directory(layout, a.lang),
    };
    println!("{}", serde_json::to_string_pretty(&value).map_err(loracomp_core::Error::from)?);
    Ok(())
}

fn directory(layout: &ArtifactLayout, lang: Lang) -> serde_json::Value {
    let mut paths = layout.required(lang, &Method::ALL);
    paths.extend(
        [TaskKind::Summarize, TaskKind::Translate(lang), TaskKind::Compose(lang)].map(|t| layout.dataset(t)),
    );
    let files: Vec<_> = paths
        .iter()
        .map(|p| match fs::metadata(p) {
            Ok(m) => json!({"path": p, "present": true, "bytes": m.len(), "size": human_bytes(m.len())}),
            Err(_) => json!({"path": p, "present": false}),
        })
        .collect();
    json!({"artifacts": layout.root(), "lang": lang, "files": files})
}

fn describe(path: &PathBuf) -> Result<serde_json::Value> {
    if !path.exists() {
        return Err(loracomp_core::Error::MissingArtifact(path.clone()).into());
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    Ok(match ext {
        "jsonl" => {
            let examples = load_jsonl(path)?;
            json!({"kind": "dataset", "splits": DatasetStats::of(&examples)})
        }
        "json" => {
            let text = fs::read_to_string(path).map_err(loracomp_core::Error::from)?;
            let fit: LoraHubFit = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("{}: not a LoraHub fit: {e}", path.display())))?;
            json!({"kind": "lorahub", "fit": fit})
        }
        _ if name.starts_with("base") => {
            let m = BaseModel::load(path)?;
            json!({
                "kind": "base",
                "config": m.config(),
                "params": m.num_params(),
                "frozen": m.is_frozen(),
                "checksum": m.checksum(),
            })
        }
        _ if name.starts_with("projection") => {
            let p = ProjectionParams::load(path)?;
            let shapes: Vec<String> = p.entries.keys().map(|(d, k)| format!("{d}x{k}")).collect();
            json!({"kind": "projection", "rank": p.rank, "shapes": shapes, "params": p.num_params()})
        }
        _ => {
            let l = LoraAdapter::load(path)?;
            json!({
                "kind": "lora",
                "task": l.task.cli_name(),
                "hyper": l.hyper,
                "sites": l.sites.len(),
                "params": l.num_params(),
            })
        }
    })
}
