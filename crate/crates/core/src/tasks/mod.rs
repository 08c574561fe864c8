//! Synthetic compositional task suite: an extractive dialogue summary
//! (primary task), word-level dictionary translation (secondary task) and
//! their composition, plus JSONL dataset I/O and the shared vocabulary.

mod generate;
mod jsonl;
mod lexicon;
mod vocab;

pub use generate::{
    build_dataset, gen_compositional, gen_task1_summarize, gen_task2_translate, generate,
    random_dialogue, random_sentence, split_of, summarize, DatasetStats, Example, Split,
    SplitSizes, TaskDef, TaskKind,
};
pub use jsonl::{load_jsonl, save_jsonl};
pub use lexicon::{Cipher, Lang, NAMES, PUNCT, SOURCE_WORDS};
pub use vocab::{compose_tag, translate_tag, TokenId, Vocab};
