use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::{Component, ModelConfig, SiteId};
use super::prompt::TrainingSequence;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::numkernel::{Segment, Tape, Tensor, Var};
use crate::tasks::TokenId;

/// Dense per-site weight deltas `ΔW`, added to `W₀` at forward time.
pub type SiteDeltas = BTreeMap<SiteId, Tensor>;

#[derive(Clone, Debug, PartialEq)]
struct Layer {
    attn_norm: Tensor,
    mlp_norm: Tensor,
    /// Indexed by `Component::index()`.
    sites: Vec<Tensor>,
}

/// Decoder-only transformer: token + learned position embeddings, pre-norm
/// blocks with grouped-query causal attention and a gated SiLU MLP, and an
/// untied output head.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseModel {
    config: ModelConfig,
    tok_emb: Tensor,
    pos_emb: Tensor,
    layers: Vec<Layer>,
    final_norm: Tensor,
    head: Tensor,
    frozen: bool,
}

/// Tape handles for every base parameter, in [`BaseModel::param_names`] order.
#[derive(Clone, Debug)]
pub struct BaseVars {
    tok_emb: Var,
    pos_emb: Var,
    layers: Vec<LayerVars>,
    final_norm: Var,
    head: Var,
}

#[derive(Clone, Debug)]
struct LayerVars {
    attn_norm: Var,
    mlp_norm: Var,
    sites: Vec<Var>,
}

impl BaseVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.tok_emb, self.pos_emb];
        for l in &self.layers {
            out.push(l.attn_norm);
            out.push(l.mlp_norm);
            out.extend(&l.sites);
        }
        out.push(self.final_norm);
        out.push(self.head);
        out
    }
}

/// Decides how each adaptable site maps its input `x` given the base weight
/// variable `w0`. The default is the plain linear map `x·W₀ᵀ`.
pub trait SiteHook<'a> {
    fn apply(&mut self, tape: &mut Tape<'a>, site: SiteId, x: Var, w0: Var) -> Result<Var>;
}

/// Leaves every site untouched.
pub struct NoAdapters;

impl<'a> SiteHook<'a> for NoAdapters {
    fn apply(&mut self, tape: &mut Tape<'a>, _site: SiteId, x: Var, w0: Var) -> Result<Var> {
        tape.matmul_nt(x, w0)
    }
}

/// Applies fixed dense deltas as `x·(W₀ + ΔW)ᵀ`; absent sites use `W₀`.
pub struct DenseDeltas<'d> {
    pub deltas: &'d SiteDeltas,
}

impl<'a> SiteHook<'a> for DenseDeltas<'a> {
    fn apply(&mut self, tape: &mut Tape<'a>, site: SiteId, x: Var, w0: Var) -> Result<Var> {
        match self.deltas.get(&site) {
            None => tape.matmul_nt(x, w0),
            Some(delta) => {
                if delta.shape() != tape.value(w0).shape() {
                    return Err(Error::Geometry {
                        site: site.to_string(),
                        detail: format!(
                            "delta has shape {:?}, site weight is {:?}",
                            delta.shape(),
                            tape.value(w0).shape()
                        ),
                    });
                }
                let d = tape.constant(delta);
                let w = tape.add(w0, d)?;
                tape.matmul_nt(x, w)
            }
        }
    }
}

/// Several token sequences packed row-wise for one forward pass.
#[derive(Clone, Debug)]
pub struct Batch {
    pub tokens: Vec<TokenId>,
    pub positions: Vec<usize>,
    pub segments: Vec<Segment>,
}

impl Batch {
    pub fn new<S: AsRef<[TokenId]>>(seqs: &[S]) -> Self {
        let mut tokens = Vec::new();
        let mut positions = Vec::new();
        let mut segments = Vec::new();
        for s in seqs {
            let s = s.as_ref();
            segments.push(Segment {
                start: tokens.len(),
                len: s.len(),
            });
            tokens.extend_from_slice(s);
            positions.extend(0..s.len());
        }
        Self {
            tokens,
            positions,
            segments,
        }
    }

    pub fn rows(&self) -> usize {
        self.tokens.len()
    }
}

impl BaseModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let out_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        let layers = (0..config.n_layers)
            .map(|_| Layer {
                attn_norm: Tensor::ones(&[d]),
                mlp_norm: Tensor::ones(&[d]),
                sites: Component::ALL
                    .iter()
                    .map(|&c| {
                        let (rows, cols) = config.site_shape(c);
                        let mut std = 1.0 / (cols as f64).sqrt();
                        if matches!(c, Component::O | Component::Down) {
                            std *= out_scale;
                        }
                        Tensor::randn(&[rows, cols], std, &mut rng)
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            tok_emb: Tensor::randn(&[config.vocab_size, d], 0.3, &mut rng),
            pos_emb: Tensor::randn(&[config.max_seq_len, d], 0.3, &mut rng),
            layers,
            final_norm: Tensor::ones(&[d]),
            head: Tensor::randn(&[config.vocab_size, d], 1.0 / (d as f64).sqrt(), &mut rng),
            config,
            frozen: false,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn site_weight(&self, site: SiteId) -> &Tensor {
        &self.layers[site.layer].sites[site.component.index()]
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = vec!["tok_emb".to_string(), "pos_emb".to_string()];
        for l in 0..self.layers.len() {
            out.push(format!("layers.{l}.attn_norm"));
            out.push(format!("layers.{l}.mlp_norm"));
            for c in Component::ALL {
                out.push(SiteId::new(l, c).to_string());
            }
        }
        out.push("final_norm".into());
        out.push("head".into());
        out
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.push(&l.attn_norm);
            out.push(&l.mlp_norm);
            out.extend(l.sites.iter());
        }
        out.push(&self.final_norm);
        out.push(&self.head);
        out
    }

    /// Mutable access for pretraining; refused once the model is frozen.
    pub fn params_mut(&mut self) -> Result<Vec<&mut Tensor>> {
        if self.frozen {
            return Err(Error::Contract("base model is frozen".into()));
        }
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.push(&mut l.attn_norm);
            out.push(&mut l.mlp_norm);
            out.extend(l.sites.iter_mut());
        }
        out.push(&mut self.final_norm);
        out.push(&mut self.head);
        Ok(out)
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.numel()).sum()
    }

    /// SHA-256 over parameter names and raw bytes, as lowercase hex.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, t) in self.param_names().iter().zip(self.params()) {
            h.update(name.as_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Places every base parameter on `tape`, trainable or constant.
    pub fn place<'a>(&'a self, tape: &mut Tape<'a>, trainable: bool) -> BaseVars {
        let mut put = |t: &'a Tensor| if trainable { tape.param(t) } else { tape.constant(t) };
        BaseVars {
            tok_emb: put(&self.tok_emb),
            pos_emb: put(&self.pos_emb),
            layers: self
                .layers
                .iter()
                .map(|l| LayerVars {
                    attn_norm: put(&l.attn_norm),
                    mlp_norm: put(&l.mlp_norm),
                    sites: l.sites.iter().map(&mut put).collect(),
                })
                .collect(),
            final_norm: put(&self.final_norm),
            head: put(&self.head),
        }
    }

    fn check_tokens(&self, batch: &Batch) -> Result<()> {
        if let Some(&bad) = batch.tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Contract(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        if let Some(s) = batch.segments.iter().find(|s| s.len > self.config.max_seq_len) {
            return Err(Error::ContextLength {
                len: s.len,
                max: self.config.max_seq_len,
            });
        }
        Ok(())
    }

    /// Records a forward pass; returns logits `[rows, vocab]`.
    pub fn forward_tape<'a>(
        &self,
        tape: &mut Tape<'a>,
        vars: &BaseVars,
        batch: &Batch,
        hook: &mut dyn SiteHook<'a>,
    ) -> Result<Var> {
        self.check_tokens(batch)?;
        let c = &self.config;
        let tok = tape.gather(vars.tok_emb, &batch.tokens)?;
        let pos = tape.gather(vars.pos_emb, &batch.positions)?;
        let mut x = tape.add(tok, pos)?;
        for (l, lv) in vars.layers.iter().enumerate() {
            let site = |c: Component| SiteId::new(l, c);
            let w = |c: Component| lv.sites[c.index()];
            let h = tape.rms_norm(x, lv.attn_norm)?;
            let q = hook.apply(tape, site(Component::Q), h, w(Component::Q))?;
            let k = hook.apply(tape, site(Component::K), h, w(Component::K))?;
            let v = hook.apply(tape, site(Component::V), h, w(Component::V))?;
            let a = tape.causal_attention(q, k, v, c.n_heads, c.n_kv_heads, &batch.segments)?;
            let o = hook.apply(tape, site(Component::O), a, w(Component::O))?;
            x = tape.add(x, o)?;
            let h = tape.rms_norm(x, lv.mlp_norm)?;
            let g = hook.apply(tape, site(Component::Gate), h, w(Component::Gate))?;
            let u = hook.apply(tape, site(Component::Up), h, w(Component::Up))?;
            let g = tape.silu(g);
            let m = tape.mul(g, u)?;
            let dn = hook.apply(tape, site(Component::Down), m, w(Component::Down))?;
            x = tape.add(x, dn)?;
        }
        let x = tape.rms_norm(x, vars.final_norm)?;
        tape.matmul_nt(x, vars.head)
    }

    /// Logits `[len, vocab]` for one sequence with `deltas` applied at the
    /// sites they name. The base weights are never modified.
    pub fn forward(&self, tokens: &[TokenId], deltas: &SiteDeltas) -> Result<Tensor> {
        let mut tape = Tape::new();
        let vars = self.place(&mut tape, false);
        let mut hook = DenseDeltas { deltas };
        let logits = self.forward_tape(&mut tape, &vars, &Batch::new(&[tokens]), &mut hook)?;
        Ok(tape.value(logits).clone())
    }

    /// Mean next-token cross-entropy over the labelled positions of `seqs`.
    pub fn loss(&self, seqs: &[TrainingSequence], deltas: &SiteDeltas) -> Result<f64> {
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in seqs.chunks(16) {
            let tokens: Vec<&[TokenId]> = chunk.iter().map(|s| s.tokens.as_slice()).collect();
            let labels: Vec<Option<TokenId>> = chunk.iter().flat_map(|s| s.labels.iter().copied()).collect();
            let n = labels.iter().filter(|l| l.is_some()).count();
            let mut tape = Tape::new();
            let vars = self.place(&mut tape, false);
            let mut hook = DenseDeltas { deltas };
            let logits = self.forward_tape(&mut tape, &vars, &Batch::new(&tokens), &mut hook)?;
            let ce = tape.cross_entropy(logits, &labels)?;
            total += tape.value(ce).item() * n as f64;
            count += n;
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    /// Greedy decoding. Returns the generated tokens without the prompt and
    /// without the end-of-sequence token. Stops at `eos`, after
    /// `max_new_tokens`, or when the context is full.
    pub fn generate(
        &self,
        prompt: &[TokenId],
        deltas: &SiteDeltas,
        max_new_tokens: usize,
        eos: TokenId,
    ) -> Result<Vec<TokenId>> {
        if prompt.is_empty() {
            return Err(Error::Contract("generate needs a non-empty prompt".into()));
        }
        if max_new_tokens == 0 {
            return Err(Error::Contract("max_new_tokens must be at least 1".into()));
        }
        if prompt.len() > self.config.max_seq_len {
            return Err(Error::ContextLength {
                len: prompt.len(),
                max: self.config.max_seq_len,
            });
        }
        let mut seq = prompt.to_vec();
        let mut out = Vec::new();
        while out.len() < max_new_tokens && seq.len() < self.config.max_seq_len {
            let logits = self.forward(&seq, deltas)?;
            let next = argmax_last_row(&logits);
            if next == eos {
                break;
            }
            seq.push(next);
            out.push(next);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::json!({ "config": self.config, "frozen": self.frozen });
        let mut c = Container::new("model", meta);
        for (name, t) in self.param_names().into_iter().zip(self.params()) {
            c.push(name, t);
        }
        c.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut c = Container::load_kind(path, "model")?;
        let config: ModelConfig = serde_json::from_value(c.meta["config"].clone())
            .map_err(|e| Error::Parse(format!("model config: {e}")))?;
        let frozen = c.meta["frozen"].as_bool().unwrap_or(false);
        let mut model = BaseModel::new(config, 0)?;
        let names = model.param_names();
        model.frozen = false;
        for (name, slot) in names.iter().zip(model.params_mut()?) {
            let t = c.take(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::Geometry {
                    site: name.clone(),
                    detail: format!("stored {:?}, config implies {:?}", t.shape(), slot.shape()),
                });
            }
            *slot = t;
        }
        model.frozen = frozen;
        Ok(model)
    }
}

pub(crate) fn argmax_last_row(logits: &Tensor) -> TokenId {
    let cols = logits.cols();
    let row = &logits.data()[logits.numel() - cols..];
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
