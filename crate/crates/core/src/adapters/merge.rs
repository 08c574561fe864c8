use serde::{Deserialize, Serialize};

use super::lora::LoraAdapter;
use super::projection::{delta_projection, ProjectionParams};
use crate::error::{Error, Result};
use crate::model::{SiteDeltas, SiteId};
use crate::numkernel::Tensor;

fn check_pair(l1: &LoraAdapter, l2: &LoraAdapter, site: SiteId) -> Result<()> {
    let (f1, f2) = (l1.factors(site)?, l2.factors(site)?);
    if f1.site_shape() != f2.site_shape() {
        return Err(Error::Geometry {
            site: site.to_string(),
            detail: format!(
                "adapters disagree on site shape: {:?} vs {:?}",
                f1.site_shape(),
                f2.site_shape()
            ),
        });
    }
    Ok(())
}

fn check_coeffs(ws: &[f64]) -> Result<()> {
    if ws.iter().all(|w| w.is_finite()) {
        Ok(())
    } else {
        Err(Error::Contract(format!("merge coefficients must be finite, got {ws:?}")))
    }
}

/// `w₁·s₁B₁A₁ + w₂·s₂B₂A₂`.
pub fn delta_linear(l1: &LoraAdapter, l2: &LoraAdapter, w1: f64, w2: f64, site: SiteId) -> Result<Tensor> {
    check_pair(l1, l2, site)?;
    check_coeffs(&[w1, w2])?;
    let mut out = l1.effective_delta(site)?.scale(w1);
    out.axpy(w2, &l2.effective_delta(site)?)?;
    Ok(out)
}

/// Rank-concatenation: `[√w₁s₁B₁ | √w₂s₂B₂]·[√w₁A₁ ; √w₂A₂]`. Negative
/// weights put their sign on the `B` block.
pub fn delta_concat(l1: &LoraAdapter, l2: &LoraAdapter, w1: f64, w2: f64, site: SiteId) -> Result<Tensor> {
    check_pair(l1, l2, site)?;
    check_coeffs(&[w1, w2])?;
    let (f1, f2) = (l1.factors(site)?, l2.factors(site)?);
    let root = |w: f64| w.abs().sqrt();
    let b = Tensor::hstack(&[
        &f1.b.scale(w1.signum() * root(w1) * l1.scaling()),
        &f2.b.scale(w2.signum() * root(w2) * l2.scaling()),
    ])?;
    let a = Tensor::vstack(&[&f1.a.scale(root(w1)), &f2.a.scale(root(w2))])?;
    b.matmul(&a)
}

/// Keeps the `⌈density·n⌉` largest-magnitude entries; ties at the cut-off
/// are broken by position so exactly that many survive.
pub fn trim(t: &Tensor, density: f64) -> Tensor {
    let n = t.numel();
    let keep = ((density * n as f64).ceil() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| t.data()[j].abs().total_cmp(&t.data()[i].abs()).then(i.cmp(&j)));
    let mut out = Tensor::zeros(t.shape());
    for &i in &order[..keep] {
        out.data_mut()[i] = t.data()[i];
    }
    out
}

/// TIES: trim each effective delta, elect a sign per entry from the sum of
/// trimmed values, then take the weight-normalised mean of the surviving
/// entries that agree with the elected sign.
pub fn delta_ties(
    l1: &LoraAdapter,
    l2: &LoraAdapter,
    w1: f64,
    w2: f64,
    density: f64,
    site: SiteId,
) -> Result<Tensor> {
    check_pair(l1, l2, site)?;
    check_coeffs(&[w1, w2])?;
    ties_dense(
        &[l1.effective_delta(site)?, l2.effective_delta(site)?],
        &[w1, w2],
        density,
    )
}

/// TIES over arbitrary same-shape task vectors.
pub fn ties_dense(deltas: &[Tensor], weights: &[f64], density: f64) -> Result<Tensor> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Contract(format!("TIES density {density} outside (0, 1]")));
    }
    let first = deltas
        .first()
        .ok_or_else(|| Error::Contract("TIES needs at least one task vector".into()))?;
    let trimmed: Vec<Tensor> = deltas.iter().map(|d| trim(d, density)).collect();
    let mut out = Tensor::zeros(first.shape());
    for e in 0..first.numel() {
        let total: f64 = trimmed.iter().map(|t| t.data()[e]).sum();
        let sign = total.signum();
        if total == 0.0 {
            continue;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (t, &w) in trimmed.iter().zip(weights) {
            let v = t.data()[e];
            if v != 0.0 && v.signum() == sign {
                num += w * v;
                den += w;
            }
        }
        if den != 0.0 {
            out.data_mut()[e] = num / den;
        }
    }
    Ok(out)
}

/// How the two task adapters are combined into per-site deltas for one
/// forward pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum MergeSpec {
    /// No adapter at all.
    ZeroShot,
    /// One adapter alone; `which` is 0 for the first task, 1 for the second.
    SingleLora { which: usize },
    Linear { w1: f64, w2: f64 },
    Concat { w1: f64, w2: f64 },
    Ties { w1: f64, w2: f64, density: f64 },
    /// Learned coefficients, one per adapter.
    LoraHub { coefficients: Vec<f64> },
    Projection,
}

impl MergeSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MergeSpec::ZeroShot | MergeSpec::Projection => Ok(()),
            MergeSpec::SingleLora { which } if *which < 2 => Ok(()),
            MergeSpec::SingleLora { which } => {
                Err(Error::Config(format!("single adapter index {which} must be 0 or 1")))
            }
            MergeSpec::Linear { w1, w2 } | MergeSpec::Concat { w1, w2 } => check_coeffs(&[*w1, *w2]),
            MergeSpec::Ties { w1, w2, density } => {
                check_coeffs(&[*w1, *w2])?;
                if *density > 0.0 && *density <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::Contract(format!("TIES density {density} outside (0, 1]")))
                }
            }
            MergeSpec::LoraHub { coefficients } => check_coeffs(coefficients),
        }
    }

    /// Per-site deltas for this strategy. `proj` is required for
    /// [`MergeSpec::Projection`].
    pub fn deltas(
        &self,
        l1: &LoraAdapter,
        l2: &LoraAdapter,
        proj: Option<&ProjectionParams>,
    ) -> Result<SiteDeltas> {
        self.validate()?;
        let sites: Vec<SiteId> = l1.sites.keys().copied().collect();
        let each = |f: &dyn Fn(SiteId) -> Result<Tensor>| -> Result<SiteDeltas> {
            sites.iter().map(|&s| Ok((s, f(s)?))).collect()
        };
        match self {
            MergeSpec::ZeroShot => Ok(SiteDeltas::new()),
            MergeSpec::SingleLora { which } => [l1, l2][*which].deltas(),
            MergeSpec::Linear { w1, w2 } => each(&|s| delta_linear(l1, l2, *w1, *w2, s)),
            MergeSpec::Concat { w1, w2 } => each(&|s| delta_concat(l1, l2, *w1, *w2, s)),
            MergeSpec::Ties { w1, w2, density } => each(&|s| delta_ties(l1, l2, *w1, *w2, *density, s)),
            MergeSpec::LoraHub { coefficients } => {
                if coefficients.len() != 2 {
                    return Err(Error::Config(format!(
                        "LoraHub over two adapters needs 2 coefficients, got {}",
                        coefficients.len()
                    )));
                }
                each(&|s| delta_linear(l1, l2, coefficients[0], coefficients[1], s))
            }
            MergeSpec::Projection => {
                let proj = proj.ok_or_else(|| {
                    Error::Config("projection merge needs trained projection parameters".into())
                })?;
                each(&|s| delta_projection(l1, l2, proj, s))
            }
        }
    }
}

/// `Σ cᵢ·sᵢBᵢAᵢ` over any number of adapters.
pub fn weighted_sum(adapters: &[&LoraAdapter], coefficients: &[f64]) -> Result<SiteDeltas> {
    let first = adapters
        .first()
        .ok_or_else(|| Error::Contract("need at least one adapter".into()))?;
    if adapters.len() != coefficients.len() {
        return Err(Error::Contract(format!(
            "{} adapters but {} coefficients",
            adapters.len(),
            coefficients.len()
        )));
    }
    check_coeffs(coefficients)?;
    let mut out = SiteDeltas::new();
    for &site in first.sites.keys() {
        let mut acc: Option<Tensor> = None;
        for (a, &c) in adapters.iter().zip(coefficients) {
            check_pair(first, a, site)?;
            let d = a.effective_delta(site)?;
            match &mut acc {
                None => acc = Some(d.scale(c)),
                Some(t) => t.axpy(c, &d)?,
            }
        }
        out.insert(site, acc.expect("at least one adapter"));
    }
    Ok(out)
}
