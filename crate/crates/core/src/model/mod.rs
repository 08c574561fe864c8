//! The base transformer, its configuration and prompt formatting.

mod config;
mod prompt;
mod transformer;

pub use config::{Component, ModelConfig, SiteId, SiteShape};
pub use prompt::{prompt_tokens, TrainingSequence};
pub use transformer::{
    BaseModel, BaseVars, Batch, DenseDeltas, NoAdapters, SiteDeltas, SiteHook,
};
