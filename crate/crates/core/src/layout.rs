//! On-disk layout of a trained artifact directory, shared by the command
//! line tools and the server.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::adapters::{LoraAdapter, LoraHubFit, ProjectionParams};
use crate::error::{Error, Result};
use crate::eval::{Artifacts, Method};
use crate::model::BaseModel;
use crate::tasks::{load_jsonl, Example, Lang, TaskKind};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactLayout {
    root: PathBuf,
}

impl ArtifactLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn base(&self) -> PathBuf {
        self.root.join("base.bin")
    }

    pub fn lora(&self, task: TaskKind) -> PathBuf {
        self.root.join(format!("lora-{task}.bin"))
    }

    pub fn joint(&self, lang: Lang) -> PathBuf {
        self.root.join(format!("joint-{lang}.bin"))
    }

    pub fn projection(&self, lang: Lang) -> PathBuf {
        self.root.join(format!("projection-{lang}.bin"))
    }

    pub fn lorahub(&self, lang: Lang) -> PathBuf {
        self.root.join(format!("lorahub-{lang}.json"))
    }

    pub fn dataset(&self, task: TaskKind) -> PathBuf {
        self.root.join("data").join(format!("{task}.jsonl"))
    }

    /// Files needed to serve `methods` for `lang`.
    pub fn required(&self, lang: Lang, methods: &[Method]) -> Vec<PathBuf> {
        let mut out = vec![self.base(), self.lora(TaskKind::Summarize)];
        for m in methods {
            let p = match m {
                Method::ZeroShot | Method::Lora1 => continue,
                Method::Lora2 | Method::Linear | Method::Concat | Method::Ties | Method::TwoStep => {
                    self.lora(TaskKind::Translate(lang))
                }
                Method::LoraHub => self.lorahub(lang),
                Method::Projection => self.projection(lang),
                Method::Joint => self.joint(lang),
            };
            out.push(p);
        }
        if methods.iter().any(|m| matches!(m, Method::LoraHub | Method::Projection)) {
            out.push(self.lora(TaskKind::Translate(lang)));
        }
        out.sort();
        out.dedup();
        out
    }

    /// Every required path that does not exist.
    pub fn missing(&self, langs: &[Lang], methods: &[Method], with_data: bool) -> Vec<PathBuf> {
        let mut paths: Vec<PathBuf> = langs.iter().flat_map(|&l| self.required(l, methods)).collect();
        if with_data {
            paths.extend(langs.iter().map(|&l| self.dataset(TaskKind::Compose(l))));
        }
        paths.sort();
        paths.dedup();
        paths.retain(|p| !p.exists());
        paths
    }

    pub fn save_lorahub(&self, lang: Lang, fit: &LoraHubFit) -> Result<()> {
        let path = self.lorahub(lang);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_vec_pretty(fit)?)?;
        Ok(())
    }

    pub fn load_lorahub(&self, lang: Lang) -> Result<LoraHubFit> {
        let path = self.lorahub(lang);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.clone()),
            _ => Error::Io(e),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn load_dataset(&self, task: TaskKind) -> Result<Vec<Example>> {
        let path = self.dataset(task);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        load_jsonl(path)
    }

    /// Loads what `methods` need for `lang` on top of a shared base model.
    /// All missing files are reported together.
    pub fn load_artifacts(&self, model: Arc<BaseModel>, lang: Lang, methods: &[Method]) -> Result<Artifacts> {
        let missing: Vec<PathBuf> = self
            .required(lang, methods)
            .into_iter()
            .filter(|p| *p != self.base() && !p.exists())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingArtifacts(missing));
        }
        let wants = |f: fn(&Method) -> bool| methods.iter().any(f);
        let config = model.config().clone();
        let load = |task| LoraAdapter::load_for(self.lora(task), &config);
        let lora2 = if wants(|m| !matches!(m, Method::ZeroShot | Method::Lora1 | Method::Joint)) {
            Some(load(TaskKind::Translate(lang))?)
        } else {
            None
        };
        Ok(Artifacts {
            lora1: Some(load(TaskKind::Summarize)?),
            lora2,
            joint: if wants(|m| *m == Method::Joint) {
                Some(LoraAdapter::load_for(self.joint(lang), &config)?)
            } else {
                None
            },
            projection: if wants(|m| *m == Method::Projection) {
                Some(ProjectionParams::load_for(self.projection(lang), &config)?)
            } else {
                None
            },
            lorahub: if wants(|m| *m == Method::LoraHub) {
                Some(self.load_lorahub(lang)?.coefficients)
            } else {
                None
            },
            model,
            lang,
        })
    }
}
