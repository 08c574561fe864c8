//! ROUGE, the method registry and the comparison harness.

mod engine;
mod method;
mod report;
mod rouge;

pub use engine::{Artifacts, Engine, Inference, MergeSettings};
pub use method::Method;
pub use report::{
    bench, compare_all, human_bytes, run_method, subset, BenchReport, BenchRow, EvalReport, MethodRun, ReportMeta,
    ReportRow, Timing, ROUGE_VARIANT,
};
pub use rouge::{lcs_len, mean_scores, rouge_l, rouge_n, score, tokenize, Prf, RougeScores};

#[cfg(test)]
mod tests;
