//! Compositional multi-tasking with low-rank adapters.
//!
//! The crate trains a small decoder-only transformer, single-task LoRA
//! adapters on top of it, and combines adapters with a catalogue of merge
//! strategies, including a projection merge that learns a tiny set of
//! shared low-rank factors on the compositional task. An evaluation harness
//! scores every strategy with ROUGE, latency and parameter accounting.

pub mod adapters;
pub mod container;
pub mod error;
pub mod eval;
pub mod layout;
pub mod model;
pub mod numkernel;
pub mod pipeline;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use numkernel::{AdamState, Tape, Tensor, Var};
