use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;

/// Half precision, as used when quoting storage for the 1B reference model.
pub const HALF_PRECISION_BYTES: u64 = 2;
/// Storage precision of this crate's own artifact files.
pub const NATIVE_BYTES: u64 = 8;

/// Extra cost a method adds on top of the base model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamAccounting {
    pub additional_params: u64,
    pub bytes_per_param: u64,
    pub additional_storage_bytes: u64,
    pub inference_passes: u32,
}

impl ParamAccounting {
    pub fn new(additional_params: u64, bytes_per_param: u64, inference_passes: u32) -> Self {
        Self {
            additional_params,
            bytes_per_param,
            additional_storage_bytes: additional_params * bytes_per_param,
            inference_passes,
        }
    }
}

/// `Σ r·(d + k)` over every adapted site.
pub fn lora_param_count(config: &ModelConfig, rank: usize) -> u64 {
    config
        .site_ids()
        .iter()
        .map(|s| {
            let (d, k) = config.site_shape(s.component);
            (rank * (d + k)) as u64
        })
        .sum()
}

/// `Σ 2·s·d` over distinct site shapes `(d, k)`: one `P₂ ∈ ℝ^{d×s}` and one
/// `P₁ ∈ ℝ^{s×d}` per shape.
pub fn projection_param_count(config: &ModelConfig, rank: usize) -> u64 {
    config
        .distinct_shapes()
        .iter()
        .map(|&(d, _)| (2 * rank * d) as u64)
        .sum()
}
