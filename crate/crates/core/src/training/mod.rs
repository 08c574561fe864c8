//! Training pipelines: base pretraining, single-task and joint LoRA, and
//! projection parameters over two frozen adapters.

mod config;
mod hooks;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{ParamGroup, TrainConfig, TrainReport};
use hooks::{LoraHook, ProjectionHook};

use crate::adapters::{averaged_deltas, LoraAdapter, LoraHyper, ProjectionParams};
use crate::error::{Error, Result};
use crate::model::{BaseModel, Batch, BaseVars, NoAdapters, SiteDeltas, TrainingSequence};
use crate::numkernel::{clip_grad_norm, AdamState, Tape, Tensor};
use crate::tasks::{generate, Example, Split, TaskKind, TokenId};

/// Tags sampled during copy pretraining, so the base model learns to
/// ignore them and copies under every task tag.
const PRETRAIN_TAGS: [TaskKind; 6] = [
    TaskKind::Copy,
    TaskKind::Summarize,
    TaskKind::Translate(crate::tasks::Lang::Es),
    TaskKind::Translate(crate::tasks::Lang::De),
    TaskKind::Compose(crate::tasks::Lang::Es),
    TaskKind::Compose(crate::tasks::Lang::De),
];

fn apply_update(
    params: &mut [&mut Tensor],
    grads: Vec<Vec<f64>>,
    adam: &mut AdamState,
    clip: Option<f64>,
) -> Result<()> {
    for (p, g) in params.iter_mut().zip(&grads) {
        p.zero_grad();
        p.accumulate_grad(g)?;
    }
    if let Some(max) = clip {
        clip_grad_norm(params, max);
    }
    adam.step(params)?;
    for p in params.iter_mut() {
        p.zero_grad();
    }
    Ok(())
}

fn check_loss(loss: f64, report: &TrainReport) -> Result<()> {
    if loss.is_finite() {
        return Ok(());
    }
    let tail = report.losses.len().saturating_sub(20);
    Err(Error::Divergence {
        msg: format!("non-finite loss at step {}", report.losses.len()),
        trace: report.losses[tail..].to_vec(),
    })
}

fn no_base_grads(tape: &Tape<'_>, base: &BaseVars) -> Result<()> {
    if base.all().into_iter().any(|v| tape.grad(v).is_some()) {
        return Err(Error::Invariant("gradient reached a frozen base weight".into()));
    }
    Ok(())
}

fn batch_inputs(batch: &[&TrainingSequence]) -> (Batch, Vec<Option<TokenId>>) {
    let tokens: Vec<&[TokenId]> = batch.iter().map(|s| s.tokens.as_slice()).collect();
    let labels = batch.iter().flat_map(|s| s.labels.iter().copied()).collect();
    (Batch::new(&tokens), labels)
}

/// The parameter group whose gradients [`loss_and_grads`] returns.
#[derive(Clone, Copy, Debug)]
pub enum Trainable<'t> {
    Base,
    Lora(&'t LoraAdapter),
    Projection {
        proj: &'t ProjectionParams,
        averaged: &'t SiteDeltas,
    },
}

/// Teacher-forced loss of `seqs` and the gradient of every tensor in the
/// selected group (in the group's tensor order). Dropout is applied only
/// when `dropout_rng` is given.
pub fn loss_and_grads(
    model: &BaseModel,
    trainable: Trainable<'_>,
    seqs: &[&TrainingSequence],
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let (batch, labels) = batch_inputs(seqs);
    let mut tape = Tape::new();
    let train_base = matches!(trainable, Trainable::Base);
    let base = model.place(&mut tape, train_base);
    let (logits, vars) = match trainable {
        Trainable::Base => {
            let logits = model.forward_tape(&mut tape, &base, &batch, &mut NoAdapters)?;
            (logits, base.all())
        }
        Trainable::Lora(adapter) => {
            let mut fallback = ChaCha8Rng::seed_from_u64(0);
            let (rng, dropout) = match dropout_rng {
                Some(r) => (r, adapter.hyper.dropout),
                None => (&mut fallback, 0.0),
            };
            let mut hook = LoraHook::place(&mut tape, adapter, rng);
            hook.dropout = dropout;
            let logits = model.forward_tape(&mut tape, &base, &batch, &mut hook)?;
            (logits, hook.all_vars())
        }
        Trainable::Projection { proj, averaged } => {
            let mut hook = ProjectionHook::place(&mut tape, proj, averaged);
            let logits = model.forward_tape(&mut tape, &base, &batch, &mut hook)?;
            (logits, hook.all_vars())
        }
    };
    let loss = tape.cross_entropy(logits, &labels)?;
    let value = tape.value(loss).item();
    tape.backward(loss)?;
    if !train_base {
        no_base_grads(&tape, &base)?;
    }
    Ok((value, tape.leaf_grads(&vars)))
}

/// Shuffled (optionally capped) epoch order over `n` items.
fn epoch_order(n: usize, cap: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(cap.unwrap_or(n).min(n));
    idx
}

fn sequences(task: TaskKind, data: &[Example]) -> Vec<TrainingSequence> {
    data.iter().map(|e| TrainingSequence::new(task, &e.input, &e.target)).collect()
}

/// Teacher-forced next-token accuracy over the labelled positions.
pub fn token_accuracy(model: &BaseModel, seqs: &[TrainingSequence], deltas: &SiteDeltas) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in seqs {
        let logits = model.forward(&s.tokens, deltas)?;
        let v = logits.cols();
        for (row, label) in s.labels.iter().enumerate() {
            let Some(label) = *label else { continue };
            let r = &logits.data()[row * v..(row + 1) * v];
            let arg = (0..v).fold(0, |b, i| if r[i] > r[b] { i } else { b });
            hit += usize::from(arg == label);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

fn copy_sequences(seed: u64, n: usize, split: Split, rng: &mut ChaCha8Rng) -> Vec<TrainingSequence> {
    generate(TaskKind::Copy, seed, n, split)
        .iter()
        .map(|e| {
            let tag = PRETRAIN_TAGS[rng.random_range(0..PRETRAIN_TAGS.len())];
            TrainingSequence::new(tag, &e.input, &e.target)
        })
        .collect()
}

/// Held-out copy set used to judge pretraining.
pub fn copy_heldout(seed: u64, n: usize) -> Vec<TrainingSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    copy_sequences(seed ^ 0x7e57, n, Split::Test, &mut rng)
}

/// Pretrains `model` on copying under random task tags until held-out
/// next-token accuracy reaches `target_accuracy`, checked after every
/// epoch. Returns the frozen model. Zero epochs returns the weights
/// unchanged.
pub fn pretrain_base(
    mut model: BaseModel,
    config: &TrainConfig,
    target_accuracy: f64,
) -> Result<(BaseModel, TrainReport)> {
    config.expect_group(ParamGroup::Base)?;
    let mut report = TrainReport::default();
    if config.epochs == 0 {
        model.freeze();
        return Ok((model, report));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.lr);
    let heldout = copy_heldout(config.seed, 200);
    let per_epoch = config.max_examples.unwrap_or(2000);
    let total = config.epochs * per_epoch.div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let data = copy_sequences(config.seed.wrapping_add(epoch as u64 + 1), per_epoch, Split::Train, &mut rng);
        for chunk in data.chunks(config.batch_size) {
            let refs: Vec<&TrainingSequence> = chunk.iter().collect();
            let (value, grads) = loss_and_grads(&model, Trainable::Base, &refs, None)?;
            check_loss(value, &report)?;
            adam.lr = config.lr_at(report.losses.len(), total);
            report.losses.push(value);
            apply_update(&mut model.params_mut()?, grads, &mut adam, config.grad_clip)?;
            report.examples_seen += chunk.len();
        }
        let acc = token_accuracy(&model, &heldout, &SiteDeltas::new())?;
        report.eval_trace.push(acc);
        tracing::info!(epoch, accuracy = acc, "pretraining epoch done");
        if acc >= target_accuracy {
            model.freeze();
            return Ok((model, report));
        }
    }
    Err(Error::Divergence {
        msg: format!(
            "copy accuracy {:.4} below {target_accuracy} after {} epochs",
            report.eval_trace.last().copied().unwrap_or(0.0),
            config.epochs
        ),
        trace: report.eval_trace,
    })
}

fn require_frozen(model: &BaseModel) -> Result<String> {
    if !model.is_frozen() {
        return Err(Error::Contract("adapter training needs a frozen base model".into()));
    }
    Ok(model.checksum())
}

fn verify_checksum(model: &BaseModel, before: &str) -> Result<()> {
    if model.checksum() != before {
        return Err(Error::Invariant("base weights changed during adapter training".into()));
    }
    Ok(())
}

fn fit_lora(
    model: &BaseModel,
    task: TaskKind,
    data: &[Example],
    hyper: LoraHyper,
    config: &TrainConfig,
) -> Result<(LoraAdapter, TrainReport)> {
    let before = require_frozen(model)?;
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adapter = LoraAdapter::init(model.config(), task, hyper, &mut rng)?;
    let seqs = sequences(task, data);
    let mut adam = AdamState::new(config.lr);
    let mut report = TrainReport::default();
    let total = config.epochs * config.max_examples.unwrap_or(seqs.len()).min(seqs.len()).div_ceil(config.batch_size);
    for _ in 0..config.epochs {
        let order = epoch_order(seqs.len(), config.max_examples, &mut rng);
        for idx in order.chunks(config.batch_size) {
            let refs: Vec<&TrainingSequence> = idx.iter().map(|&i| &seqs[i]).collect();
            let (value, grads) = loss_and_grads(model, Trainable::Lora(&adapter), &refs, Some(&mut rng))?;
            check_loss(value, &report)?;
            adam.lr = config.lr_at(report.losses.len(), total);
            report.losses.push(value);
            apply_update(&mut adapter.tensors_mut(), grads, &mut adam, config.grad_clip)?;
            report.examples_seen += idx.len();
        }
    }
    verify_checksum(model, &before)?;
    Ok((adapter, report))
}

/// Trains a single-task adapter (`B = 0` start) with the base frozen.
pub fn train_lora(
    model: &BaseModel,
    task: TaskKind,
    data: &[Example],
    hyper: LoraHyper,
    config: &TrainConfig,
) -> Result<(LoraAdapter, TrainReport)> {
    config.expect_group(ParamGroup::Lora)?;
    fit_lora(model, task, data, hyper, config)
}

/// Trains a fresh adapter directly on compositional data.
pub fn train_joint_expert(
    model: &BaseModel,
    task: TaskKind,
    data: &[Example],
    hyper: LoraHyper,
    config: &TrainConfig,
) -> Result<(LoraAdapter, TrainReport)> {
    config.expect_group(ParamGroup::JointLora)?;
    if !matches!(task, TaskKind::Compose(_)) {
        return Err(Error::Config(format!("joint expert needs a compositional task, got {task:?}")));
    }
    fit_lora(model, task, data, hyper, config)
}

/// Learns projection pairs of rank `rank` over the averaged deltas of two
/// frozen adapters, with `P₂ = 0` at the start.
pub fn train_projection(
    model: &BaseModel,
    l1: &LoraAdapter,
    l2: &LoraAdapter,
    task: TaskKind,
    data: &[Example],
    rank: usize,
    config: &TrainConfig,
) -> Result<(ProjectionParams, TrainReport)> {
    config.expect_group(ParamGroup::Projection)?;
    let before = require_frozen(model)?;
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    l1.check_geometry(model.config())?;
    l2.check_geometry(model.config())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut proj = ProjectionParams::init(model.config(), rank, &mut rng);
    let averaged = averaged_deltas(l1, l2)?;
    let seqs = sequences(task, data);
    let mut adam = AdamState::new(config.lr);
    let mut report = TrainReport::default();
    let total = config.epochs * config.max_examples.unwrap_or(seqs.len()).min(seqs.len()).div_ceil(config.batch_size);
    for _ in 0..config.epochs {
        let order = epoch_order(seqs.len(), config.max_examples, &mut rng);
        for idx in order.chunks(config.batch_size) {
            let refs: Vec<&TrainingSequence> = idx.iter().map(|&i| &seqs[i]).collect();
            let trainable = Trainable::Projection {
                proj: &proj,
                averaged: &averaged,
            };
            let (value, grads) = loss_and_grads(model, trainable, &refs, None)?;
            check_loss(value, &report)?;
            adam.lr = config.lr_at(report.losses.len(), total);
            report.losses.push(value);
            apply_update(&mut proj.tensors_mut(), grads, &mut adam, config.grad_clip)?;
            report.examples_seen += idx.len();
        }
    }
    verify_checksum(model, &before)?;
    Ok((proj, report))
}
