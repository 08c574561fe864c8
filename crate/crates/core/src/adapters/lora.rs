use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SiteDeltas, SiteId};
use crate::numkernel::Tensor;
use crate::tasks::TaskKind;

/// Low-rank factors at one site: `B ∈ ℝ^{d×r}`, `A ∈ ℝ^{r×k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraFactors {
    pub b: Tensor,
    pub a: Tensor,
}

impl LoraFactors {
    /// `(d, k)` of the site these factors adapt.
    pub fn site_shape(&self) -> (usize, usize) {
        (self.b.rows(), self.a.cols())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraHyper {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl LoraHyper {
    /// Rank 64, alpha 32, dropout 0.05: the adapter size used at desk scale.
    pub fn desk() -> Self {
        Self {
            rank: 64,
            alpha: 32.0,
            dropout: 0.05,
        }
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

/// A trained (or freshly initialised) adapter covering every adapted site.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    pub task: TaskKind,
    pub hyper: LoraHyper,
    pub sites: BTreeMap<SiteId, LoraFactors>,
}

impl LoraAdapter {
    /// `B = 0` and `A ~ N(0, 1/k)`, so the initial `ΔW` is exactly zero.
    pub fn init<R: Rng + ?Sized>(
        config: &ModelConfig,
        task: TaskKind,
        hyper: LoraHyper,
        rng: &mut R,
    ) -> Result<Self> {
        if hyper.rank == 0 {
            return Err(Error::Config("LoRA rank must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&hyper.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", hyper.dropout)));
        }
        let mut sites = BTreeMap::new();
        for site in config.site_ids() {
            let (d, k) = config.site_shape(site.component);
            if hyper.rank > d.min(k) {
                return Err(Error::Config(format!(
                    "rank {} exceeds min(d, k) = {} at {site}",
                    hyper.rank,
                    d.min(k)
                )));
            }
            sites.insert(
                site,
                LoraFactors {
                    b: Tensor::zeros(&[d, hyper.rank]),
                    a: Tensor::randn(&[hyper.rank, k], 1.0 / (k as f64).sqrt(), rng),
                },
            );
        }
        Ok(Self { task, hyper, sites })
    }

    pub fn scaling(&self) -> f64 {
        self.hyper.scaling()
    }

    pub fn factors(&self, site: SiteId) -> Result<&LoraFactors> {
        self.sites
            .get(&site)
            .ok_or_else(|| Error::Geometry {
                site: site.to_string(),
                detail: "adapter has no factors for this site".into(),
            })
    }

    /// `(α/r)·B·A` at `site`.
    pub fn effective_delta(&self, site: SiteId) -> Result<Tensor> {
        let f = self.factors(site)?;
        Ok(f.b.matmul(&f.a)?.scale(self.scaling()))
    }

    pub fn deltas(&self) -> Result<SiteDeltas> {
        self.sites
            .keys()
            .map(|&s| Ok((s, self.effective_delta(s)?)))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.sites.values().map(|f| f.a.numel() + f.b.numel()).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.sites.values().flat_map(|f| [&f.b, &f.a]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.sites.values_mut().flat_map(|f| [&mut f.b, &mut f.a]).collect()
    }

    /// Fails on the first site (in site order) whose geometry disagrees
    /// with `config`, or when a configured site is missing.
    pub fn check_geometry(&self, config: &ModelConfig) -> Result<()> {
        let expected = config.site_ids();
        for site in &expected {
            let (d, k) = config.site_shape(site.component);
            let f = self.factors(*site)?;
            let r = self.hyper.rank;
            if f.b.shape() != [d, r] || f.a.shape() != [r, k] {
                return Err(Error::Geometry {
                    site: site.to_string(),
                    detail: format!(
                        "adapter has B {:?} and A {:?}, model expects B [{d}, {r}] and A [{r}, {k}]",
                        f.b.shape(),
                        f.a.shape()
                    ),
                });
            }
        }
        if let Some(extra) = self.sites.keys().find(|s| !expected.contains(s)) {
            return Err(Error::Geometry {
                site: extra.to_string(),
                detail: "site does not exist in the model".into(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let geometry: Vec<_> = self
            .sites
            .iter()
            .map(|(s, f)| (s.to_string(), f.site_shape()))
            .collect();
        let meta = serde_json::json!({
            "task": self.task,
            "hyper": self.hyper,
            "geometry": geometry,
        });
        let mut c = Container::new("lora", meta);
        for (site, f) in &self.sites {
            c.push(format!("{site}.b"), &f.b);
            c.push(format!("{site}.a"), &f.a);
        }
        c.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Container::load_kind(path, "lora")?;
        let parse = |e: serde_json::Error| Error::Parse(format!("adapter header: {e}"));
        let task: TaskKind = serde_json::from_value(c.meta["task"].clone()).map_err(parse)?;
        let hyper: LoraHyper = serde_json::from_value(c.meta["hyper"].clone()).map_err(parse)?;
        let geometry: Vec<(String, (usize, usize))> =
            serde_json::from_value(c.meta["geometry"].clone()).map_err(parse)?;
        let mut sites = BTreeMap::new();
        for (name, _) in geometry {
            let site: SiteId = name.parse()?;
            let b = c.take(&format!("{name}.b"))?;
            let a = c.take(&format!("{name}.a"))?;
            sites.insert(site, LoraFactors { b, a });
        }
        Ok(Self { task, hyper, sites })
    }

    /// Loads and checks geometry against the model that will use it.
    pub fn load_for(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Self> {
        let a = Self::load(path)?;
        a.check_geometry(config)?;
        Ok(a)
    }
}
