use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adapters::{LoraAdapter, ProjectionParams};
use crate::error::Result;
use crate::model::{SiteDeltas, SiteHook, SiteId, SiteShape};
use crate::numkernel::{Tape, Var};

/// Trainable LoRA factors on the tape, applied as
/// `x·W₀ᵀ + s·dropout(x)·Aᵀ·Bᵀ`.
pub(crate) struct LoraHook<'r> {
    pub vars: BTreeMap<SiteId, (Var, Var)>,
    pub scaling: f64,
    pub dropout: f64,
    pub rng: &'r mut ChaCha8Rng,
}

impl<'r> LoraHook<'r> {
    pub fn place<'a>(tape: &mut Tape<'a>, adapter: &'a LoraAdapter, rng: &'r mut ChaCha8Rng) -> Self {
        let vars = adapter
            .sites
            .iter()
            .map(|(&s, f)| (s, (tape.param(&f.b), tape.param(&f.a))))
            .collect();
        Self {
            vars,
            scaling: adapter.scaling(),
            dropout: adapter.hyper.dropout,
            rng,
        }
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.values().flat_map(|&(b, a)| [b, a]).collect()
    }
}

impl<'a> SiteHook<'a> for LoraHook<'_> {
    fn apply(&mut self, tape: &mut Tape<'a>, site: SiteId, x: Var, w0: Var) -> Result<Var> {
        let base = tape.matmul_nt(x, w0)?;
        let Some(&(b, a)) = self.vars.get(&site) else { return Ok(base) };
        let xin = if self.dropout > 0.0 {
            let keep = 1.0 - self.dropout;
            let n = tape.value(x).numel();
            let mask = (0..n)
                .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            tape.mul_const(x, mask)?
        } else {
            x
        };
        let xa = tape.matmul_nt(xin, a)?;
        let xab = tape.matmul_nt(xa, b)?;
        let delta = tape.scale(xab, self.scaling);
        tape.add(base, delta)
    }
}

/// Trainable projection pairs over fixed averaged deltas `M`:
/// `x·(W₀ + P₂P₁M)ᵀ`.
pub(crate) struct ProjectionHook<'a> {
    pub vars: BTreeMap<SiteShape, (Var, Var)>,
    pub averaged: &'a SiteDeltas,
}

impl<'a> ProjectionHook<'a> {
    pub fn place(tape: &mut Tape<'a>, proj: &'a ProjectionParams, averaged: &'a SiteDeltas) -> Self {
        let vars = proj
            .entries
            .iter()
            .map(|(&shape, p)| (shape, (tape.param(&p.p2), tape.param(&p.p1))))
            .collect();
        Self { vars, averaged }
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.values().flat_map(|&(p2, p1)| [p2, p1]).collect()
    }
}

impl<'a> SiteHook<'a> for ProjectionHook<'a> {
    fn apply(&mut self, tape: &mut Tape<'a>, site: SiteId, x: Var, w0: Var) -> Result<Var> {
        let Some(m) = self.averaged.get(&site) else { return tape.matmul_nt(x, w0) };
        let (d, k) = m.dims2()?;
        let &(p2, p1) = self.vars.get(&(d, k)).ok_or_else(|| {
            crate::Error::Config(format!("projection parameters have no entry for site shape {d}x{k}"))
        })?;
        let mv = tape.constant(m);
        let pm = tape.matmul(p1, mv)?;
        let dw = tape.matmul(p2, pm)?;
        let w = tape.add(w0, dw)?;
        tape.matmul_nt(x, w)
    }
}
