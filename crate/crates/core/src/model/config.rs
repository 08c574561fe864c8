use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::Vocab;

/// A projection inside a transformer block that can carry an adapter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Q,
    K,
    V,
    O,
    Up,
    Down,
    Gate,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::Q,
        Component::K,
        Component::V,
        Component::O,
        Component::Up,
        Component::Down,
        Component::Gate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Component::Q => "q",
            Component::K => "k",
            Component::V => "v",
            Component::O => "o",
            Component::Up => "up",
            Component::Down => "down",
            Component::Gate => "gate",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown site component {s:?}")))
    }
}

/// One adaptable weight matrix: `(layer, component)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SiteId {
    pub layer: usize,
    pub component: Component,
}

impl SiteId {
    pub fn new(layer: usize, component: Component) -> Self {
        Self { layer, component }
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layers.{}.{}", self.layer, self.component.name())
    }
}

impl FromStr for SiteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad site id {s:?}"));
        let rest = s.strip_prefix("layers.").ok_or_else(bad)?;
        let (layer, comp) = rest.split_once('.').ok_or_else(bad)?;
        Ok(SiteId::new(layer.parse().map_err(|_| bad())?, comp.parse()?))
    }
}

/// `(d, k)`: output and input dimension of a site's weight `W₀ ∈ ℝ^{d×k}`.
pub type SiteShape = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub n_kv_heads: usize,
    pub mlp_dim: usize,
    pub max_seq_len: usize,
    /// Components that receive adapters.
    pub sites: Vec<Component>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// The desk-scale model used throughout the pipeline.
    pub fn desk() -> Self {
        Self {
            vocab_size: Vocab::global().len(),
            d_model: 64,
            n_layers: 8,
            n_heads: 4,
            n_kv_heads: 4,
            mlp_dim: 256,
            max_seq_len: 80,
            sites: Component::ALL.to_vec(),
        }
    }

    /// Llama-3.2-1B site geometry (16 layers, 32 query / 8 key-value heads
    /// of size 64, MLP width 8192). Used for parameter accounting only.
    pub fn llama_3_2_1b() -> Self {
        Self {
            vocab_size: 128_256,
            d_model: 2048,
            n_layers: 16,
            n_heads: 32,
            n_kv_heads: 8,
            mlp_dim: 8192,
            max_seq_len: 131_072,
            sites: Component::ALL.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_layers == 0 || self.max_seq_len == 0 {
            return fail(format!("degenerate model config {self:?}"));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_kv_heads == 0 || self.n_heads % self.n_kv_heads != 0 {
            return fail(format!(
                "n_heads {} is not divisible by n_kv_heads {}",
                self.n_heads, self.n_kv_heads
            ));
        }
        if self.mlp_dim <= self.d_model {
            return fail(format!(
                "mlp_dim {} must exceed d_model {}",
                self.mlp_dim, self.d_model
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn kv_dim(&self) -> usize {
        self.n_kv_heads * self.head_dim()
    }

    pub fn site_shape(&self, component: Component) -> SiteShape {
        let (d, m, kv) = (self.d_model, self.mlp_dim, self.kv_dim());
        match component {
            Component::Q | Component::O => (d, d),
            Component::K | Component::V => (kv, d),
            Component::Up | Component::Gate => (m, d),
            Component::Down => (d, m),
        }
    }

    /// Every adapted site, layer-major in `Component::ALL` order.
    pub fn site_ids(&self) -> Vec<SiteId> {
        (0..self.n_layers)
            .flat_map(|l| {
                Component::ALL
                    .into_iter()
                    .filter(|c| self.sites.contains(c))
                    .map(move |c| SiteId::new(l, c))
            })
            .collect()
    }

    /// Distinct site shapes among adapted components, sorted.
    pub fn distinct_shapes(&self) -> Vec<SiteShape> {
        let mut shapes: Vec<SiteShape> = self.sites.iter().map(|&c| self.site_shape(c)).collect();
        shapes.sort_unstable();
        shapes.dedup();
        shapes
    }
}
