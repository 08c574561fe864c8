use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Precision, recall and F1 of one comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(overlap: usize, cand: usize, reference: usize) -> Self {
        let precision = if cand == 0 { 0.0 } else { overlap as f64 / cand as f64 };
        let recall = if reference == 0 { 0.0 } else { overlap as f64 / reference as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// F-measures of ROUGE-1, ROUGE-2 and ROUGE-L, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1_f: f64,
    pub rouge2_f: f64,
    #[serde(rename = "rougeL_f")]
    pub rouge_l_f: f64,
}

/// Lowercased whitespace tokens; no stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// ROUGE-N with clipped n-gram counts. `n` must be at least 1.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> Prf {
    assert!(n >= 1, "ROUGE-N needs n >= 1");
    let (c, r) = (ngrams(candidate, n), ngrams(reference, n));
    let overlap = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    Prf::from_counts(overlap, c.values().sum(), r.values().sum())
}

/// Length of the longest common subsequence, by dynamic programming over
/// a single rolling row (kept on the stack for short references).
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut stack = [0u32; 24];
    let mut heap = Vec::new();
    let row = if b.len() < stack.len() {
        &mut stack[..=b.len()]
    } else {
        heap.resize(b.len() + 1, 0);
        &mut heap[..]
    };
    for x in a {
        let mut diag = 0u32;
        let mut left = 0u32;
        for (cell, y) in row[1..].iter_mut().zip(b) {
            let up = *cell;
            // Bounded by b.len(); the unchecked add keeps the loop tight in checked builds.
            left = if x == y { diag.wrapping_add(1) } else { left.max(up) };
            *cell = left;
            diag = up;
        }
    }
    row[b.len()] as usize
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> Prf {
    Prf::from_counts(lcs_len(candidate, reference), candidate.len(), reference.len())
}

/// All three scores for two texts. An empty reference scores zero.
pub fn score(candidate: &str, reference: &str) -> RougeScores {
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if r.is_empty() {
        tracing::debug!("empty ROUGE reference; scoring as zero");
    }
    RougeScores {
        rouge1_f: rouge_n(&c, &r, 1).f1,
        rouge2_f: rouge_n(&c, &r, 2).f1,
        rouge_l_f: rouge_l(&c, &r).f1,
    }
}

/// Arithmetic mean of each score.
pub fn mean_scores(scores: &[RougeScores]) -> RougeScores {
    if scores.is_empty() {
        return RougeScores::default();
    }
    let n = scores.len() as f64;
    RougeScores {
        rouge1_f: scores.iter().map(|s| s.rouge1_f).sum::<f64>() / n,
        rouge2_f: scores.iter().map(|s| s.rouge2_f).sum::<f64>() / n,
        rouge_l_f: scores.iter().map(|s| s.rouge_l_f).sum::<f64>() / n,
    }
}
