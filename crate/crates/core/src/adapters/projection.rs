use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::lora::LoraAdapter;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SiteDeltas, SiteId, SiteShape};
use crate::numkernel::Tensor;

/// Output-side projection for one site shape `(d, k)`:
/// `P₂ ∈ ℝ^{d×s}`, `P₁ ∈ ℝ^{s×d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionPair {
    pub p2: Tensor,
    pub p1: Tensor,
}

/// Projection factors shared by every site with the same `(d, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams {
    pub rank: usize,
    pub entries: BTreeMap<SiteShape, ProjectionPair>,
}

impl ProjectionParams {
    /// `P₂ = 0` and `P₁ ~ N(0, 1/d)`, so the initial `ΔW` is exactly zero.
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rank: usize, rng: &mut R) -> Self {
        let entries = config
            .distinct_shapes()
            .into_iter()
            .map(|(d, k)| {
                let pair = ProjectionPair {
                    p2: Tensor::zeros(&[d, rank]),
                    p1: Tensor::randn(&[rank, d], 1.0 / (d as f64).sqrt(), rng),
                };
                ((d, k), pair)
            })
            .collect();
        Self { rank, entries }
    }

    pub fn pair(&self, shape: SiteShape) -> Result<&ProjectionPair> {
        self.entries.get(&shape).ok_or_else(|| {
            Error::Config(format!(
                "projection parameters have no entry for site shape {}x{}",
                shape.0, shape.1
            ))
        })
    }

    pub fn num_params(&self) -> usize {
        self.entries.values().map(|p| p.p1.numel() + p.p2.numel()).sum()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.entries.values().flat_map(|p| [&p.p2, &p.p1]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.entries.values_mut().flat_map(|p| [&mut p.p2, &mut p.p1]).collect()
    }

    /// `P₂·(P₁·M)` using the entry for `M`'s shape.
    pub fn project(&self, m: &Tensor) -> Result<Tensor> {
        let (d, k) = m.dims2()?;
        let p = self.pair((d, k))?;
        p.p2.matmul(&p.p1.matmul(m)?)
    }

    pub fn check_geometry(&self, config: &ModelConfig) -> Result<()> {
        let shapes = config.distinct_shapes();
        for &(d, k) in &shapes {
            let p = self.pair((d, k))?;
            let s = self.rank;
            if p.p2.shape() != [d, s] || p.p1.shape() != [s, d] {
                return Err(Error::Geometry {
                    site: format!("{d}x{k}"),
                    detail: format!(
                        "projection has P2 {:?} and P1 {:?}, expected [{d}, {s}] and [{s}, {d}]",
                        p.p2.shape(),
                        p.p1.shape()
                    ),
                });
            }
        }
        if let Some((d, k)) = self.entries.keys().find(|s| !shapes.contains(s)) {
            return Err(Error::Geometry {
                site: format!("{d}x{k}"),
                detail: "no site in the model has this shape".into(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let shapes: Vec<SiteShape> = self.entries.keys().copied().collect();
        let meta = serde_json::json!({ "rank": self.rank, "shapes": shapes });
        let mut c = Container::new("projection", meta);
        for (&(d, k), p) in &self.entries {
            c.push(format!("{d}x{k}.p2"), &p.p2);
            c.push(format!("{d}x{k}.p1"), &p.p1);
        }
        c.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Container::load_kind(path, "projection")?;
        let parse = |e: serde_json::Error| Error::Parse(format!("projection header: {e}"));
        let rank: usize = serde_json::from_value(c.meta["rank"].clone()).map_err(parse)?;
        let shapes: Vec<SiteShape> = serde_json::from_value(c.meta["shapes"].clone()).map_err(parse)?;
        let mut entries = BTreeMap::new();
        for (d, k) in shapes {
            let p2 = c.take(&format!("{d}x{k}.p2"))?;
            let p1 = c.take(&format!("{d}x{k}.p1"))?;
            entries.insert((d, k), ProjectionPair { p2, p1 });
        }
        Ok(Self { rank, entries })
    }

    pub fn load_for(path: impl AsRef<Path>, config: &ModelConfig) -> Result<Self> {
        let p = Self::load(path)?;
        p.check_geometry(config)?;
        Ok(p)
    }
}

/// `M = 0.5·s₁B₁A₁ + 0.5·s₂B₂A₂` at every site both adapters cover.
pub fn averaged_deltas(l1: &LoraAdapter, l2: &LoraAdapter) -> Result<SiteDeltas> {
    let mut out = SiteDeltas::new();
    for &site in l1.sites.keys() {
        out.insert(site, super::merge::delta_linear(l1, l2, 0.5, 0.5, site)?);
    }
    Ok(out)
}

/// `ΔW = P₂·P₁·(0.5·s₁B₁A₁ + 0.5·s₂B₂A₂)`.
pub fn delta_projection(
    l1: &LoraAdapter,
    l2: &LoraAdapter,
    proj: &ProjectionParams,
    site: SiteId,
) -> Result<Tensor> {
    let m = super::merge::delta_linear(l1, l2, 0.5, 0.5, site)?;
    proj.project(&m)
}
