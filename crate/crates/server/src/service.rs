use std::collections::BTreeMap;
use std::sync::Arc;

use loracomp_core::eval::{score, Engine, MergeSettings, Method};
use loracomp_core::layout::ArtifactLayout;
use loracomp_core::model::BaseModel;
use loracomp_core::tasks::{split_of, summarize, Example, Lang, Split, TaskKind};

use crate::api::{MethodOutput, TaskMode};
use crate::config::ServerConfig;
use crate::error::{ApiError, ServerError};

/// One validated inference request.
#[derive(Clone, Debug)]
pub struct InferJob {
    pub method: Method,
    pub mode: TaskMode,
    pub lang: Lang,
    pub text: String,
    pub compare: bool,
    pub example_id: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub primary: MethodOutput,
    pub comparisons: Option<Vec<MethodOutput>>,
}

/// The loaded model, one prepared engine per target mapping, and the
/// emulator's dialogues. Adapters stay separate from the base weights.
pub struct Service {
    model: Arc<BaseModel>,
    engines: BTreeMap<Lang, Engine>,
    dialogues: BTreeMap<Lang, Vec<Example>>,
}

impl Service {
    pub fn load(config: &ServerConfig) -> Result<Self, ServerError> {
        let layout = ArtifactLayout::new(&config.artifacts);
        let missing = layout.missing(&config.langs, &Method::ALL, true);
        if !missing.is_empty() {
            return Err(ServerError::MissingArtifacts(missing));
        }
        let mut model = BaseModel::load(layout.base())?;
        model.freeze();
        let model = Arc::new(model);
        let settings = MergeSettings {
            max_new_tokens: config.max_new_tokens,
            ..MergeSettings::default()
        };
        let mut engines = BTreeMap::new();
        let mut dialogues = BTreeMap::new();
        for &lang in &config.langs {
            let artifacts = layout.load_artifacts(model.clone(), lang, &Method::ALL)?;
            engines.insert(lang, Engine::new(artifacts, &Method::ALL, settings.clone())?);
            let test = split_of(&layout.load_dataset(TaskKind::Compose(lang))?, Split::Test);
            if test.is_empty() {
                return Err(ServerError::Config(format!("the {lang} dataset has no test split")));
            }
            dialogues.insert(lang, test);
        }
        Ok(Self {
            model,
            engines,
            dialogues,
        })
    }

    pub fn model(&self) -> &BaseModel {
        &self.model
    }

    pub fn langs(&self) -> Vec<Lang> {
        self.engines.keys().copied().collect()
    }

    pub fn engine(&self, lang: Lang) -> Option<&Engine> {
        self.engines.get(&lang)
    }

    pub fn dialogues(&self, lang: Lang) -> &[Example] {
        self.dialogues.get(&lang).map_or(&[], Vec::as_slice)
    }

    /// Longest input, in words, that leaves room for the prompt markers.
    pub fn max_input_tokens(&self) -> usize {
        self.model.config().max_seq_len.saturating_sub(4)
    }

    fn ground_truth(&self, job: &InferJob) -> Option<String> {
        let ex = self.dialogues(job.lang).get(job.example_id?)?;
        if ex.input != job.text {
            return None;
        }
        Some(match job.mode {
            TaskMode::SummarizeOnly => summarize(&ex.input),
            TaskMode::SummarizeTranslate => ex.target.clone(),
        })
    }

    fn run_one(&self, engine: &Engine, method: Method, job: &InferJob, truth: Option<&str>) -> Result<MethodOutput, ApiError> {
        let inf = match job.mode {
            TaskMode::SummarizeOnly => engine.summarize(&job.text)?,
            TaskMode::SummarizeTranslate => engine.infer(method, &job.text)?,
        };
        Ok(MethodOutput {
            method: method.name().to_string(),
            label: method.label().to_string(),
            rouge: truth.map(|t| score(&inf.output, t)),
            output: inf.output,
            intermediate: inf.intermediate,
            latency_seconds: inf.latency_seconds,
            inference_passes: inf.passes,
        })
    }

    /// Runs a job exactly as the offline evaluation does.
    pub fn run(&self, job: &InferJob) -> Result<Outcome, ApiError> {
        let engine = self
            .engine(job.lang)
            .ok_or_else(|| ApiError::internal(format!("no engine for {}", job.lang)))?;
        let truth = self.ground_truth(job);
        if !job.compare {
            let method = match job.mode {
                TaskMode::SummarizeOnly => Method::Lora1,
                TaskMode::SummarizeTranslate => job.method,
            };
            return Ok(Outcome {
                primary: self.run_one(engine, method, job, truth.as_deref())?,
                comparisons: None,
            });
        }
        let all = engine
            .methods()
            .into_iter()
            .map(|m| self.run_one(engine, m, job, truth.as_deref()))
            .collect::<Result<Vec<_>, _>>()?;
        let primary = all
            .iter()
            .find(|o| o.method == job.method.name())
            .cloned()
            .ok_or_else(|| ApiError::internal(format!("method {} is not prepared", job.method)))?;
        Ok(Outcome {
            primary,
            comparisons: Some(all),
        })
    }
}
