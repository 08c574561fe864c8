use serde::{Deserialize, Serialize};

use super::lora::LoraAdapter;
use super::merge::weighted_sum;
use crate::error::{Error, Result};
use crate::model::{BaseModel, TrainingSequence};
use crate::tasks::{Example, TaskKind};

pub const COEFF_BOUND: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Derivative-free Nelder–Mead minimisation inside the box `[lo, hi]ⁿ`
/// with at most `budget` evaluations of `f`. Returns the best point seen.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> Result<f64>,
    x0: &[f64],
    budget: usize,
    (lo, hi): (f64, f64),
    step: f64,
) -> Result<SearchResult> {
    if budget == 0 {
        return Err(Error::Contract("search budget must be at least 1".into()));
    }
    let n = x0.len();
    let clamp = |x: Vec<f64>| -> Vec<f64> { x.into_iter().map(|v| v.clamp(lo, hi)).collect() };
    let mut evals = 0usize;
    let mut best = SearchResult {
        x: clamp(x0.to_vec()),
        value: f64::INFINITY,
        evaluations: 0,
    };
    let mut eval = |x: &[f64], best: &mut SearchResult| -> Result<Option<f64>> {
        if evals >= budget {
            return Ok(None);
        }
        evals += 1;
        let v = f(x)?;
        let v = if v.is_finite() { v } else { f64::INFINITY };
        if v < best.value {
            best.value = v;
            best.x = x.to_vec();
        }
        best.evaluations = evals;
        Ok(Some(v))
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let start = best.x.clone();
    match eval(&start, &mut best)? {
        Some(v) => simplex.push((start.clone(), v)),
        None => return Ok(best),
    }
    for i in 0..n {
        let mut x = start.clone();
        x[i] = if x[i] + step <= hi { x[i] + step } else { x[i] - step };
        let x = clamp(x);
        match eval(&x, &mut best)? {
            Some(v) => simplex.push((x, v)),
            None => return Ok(best),
        }
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread.abs() < 1e-10 && size < 1e-6 {
            return Ok(best);
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            clamp(
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };
        let xr = along(1.0);
        let Some(fr) = eval(&xr, &mut best)? else { return Ok(best) };
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let Some(fe) = eval(&xe, &mut best)? else { return Ok(best) };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, t) = if fr < simplex[n].1 { (along(0.5), fr) } else { (along(-0.5), simplex[n].1) };
            let Some(fc) = eval(&xc, &mut best)? else { return Ok(best) };
            if fc < t {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = clamp(x0.iter().zip(&item.0).map(|(a, b)| a + 0.5 * (b - a)).collect());
                    let Some(v) = eval(&x, &mut best)? else { return Ok(best) };
                    *item = (x, v);
                }
            }
        }
    }
}

/// Result of fitting LoraHub coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraHubFit {
    pub coefficients: Vec<f64>,
    pub loss: f64,
    pub evaluations: usize,
}

/// Searches coefficients `c` minimising the teacher-forced cross-entropy
/// of `Σ cᵢ·ΔWᵢ` on `valset`, starting from `1/n` and clamped to
/// `[-1.5, 1.5]`.
pub fn fit_lorahub(
    model: &BaseModel,
    adapters: &[&LoraAdapter],
    task: TaskKind,
    valset: &[Example],
    budget: usize,
) -> Result<LoraHubFit> {
    if adapters.is_empty() {
        return Err(Error::Contract("LoraHub needs at least one adapter".into()));
    }
    if valset.is_empty() {
        return Err(Error::Contract("LoraHub needs a non-empty validation set".into()));
    }
    let seqs: Vec<TrainingSequence> = valset
        .iter()
        .map(|e| TrainingSequence::new(task, &e.input, &e.target))
        .collect();
    let n = adapters.len();
    let x0 = vec![1.0 / n as f64; n];
    let res = nelder_mead(
        |c| model.loss(&seqs, &weighted_sum(adapters, c)?),
        &x0,
        budget,
        (-COEFF_BOUND, COEFF_BOUND),
        0.25,
    )?;
    Ok(LoraHubFit {
        coefficients: res.x,
        loss: res.value,
        evaluations: res.evaluations,
    })
}
