//! LoRA adapters, merge strategies and parameter accounting.

mod accounting;
mod lora;
mod lorahub;
mod merge;
mod projection;

pub use accounting::{
    lora_param_count, projection_param_count, ParamAccounting, HALF_PRECISION_BYTES, NATIVE_BYTES,
};
pub use lora::{LoraAdapter, LoraFactors, LoraHyper};
pub use lorahub::{fit_lorahub, nelder_mead, LoraHubFit, SearchResult, COEFF_BOUND};
pub use merge::{delta_concat, delta_linear, delta_ties, ties_dense, trim, weighted_sum, MergeSpec};
pub use projection::{averaged_deltas, delta_projection, ProjectionPair, ProjectionParams};
