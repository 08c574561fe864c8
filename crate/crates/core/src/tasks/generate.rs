use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{Lang, NAMES, PUNCT, SOURCE_WORDS};
use super::vocab::{compose_tag, translate_tag, Vocab, TAG_COPY, TAG_SUMMARIZE};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub target: String,
    pub split: Split,
}

/// Which transform a dataset or adapter is about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lang")]
pub enum TaskKind {
    /// Generic copying, used to pretrain the base model.
    Copy,
    /// Extractive dialogue summary (the primary task).
    Summarize,
    /// Word-level dictionary translation (the secondary task).
    Translate(Lang),
    /// Translated summary: `Translate(Summarize(x))`.
    Compose(Lang),
}

impl TaskKind {
    pub fn tag(self) -> String {
        match self {
            TaskKind::Copy => TAG_COPY.to_string(),
            TaskKind::Summarize => TAG_SUMMARIZE.to_string(),
            TaskKind::Translate(l) => translate_tag(l),
            TaskKind::Compose(l) => compose_tag(l),
        }
    }

    pub fn tag_id(self) -> usize {
        Vocab::global().special(&self.tag())
    }

    pub fn description(self) -> String {
        match self {
            TaskKind::Copy => "repeat the input verbatim".into(),
            TaskKind::Summarize => {
                "summarize the dialogue: each speaker's first clause of their first turn".into()
            }
            TaskKind::Translate(l) => format!("translate the text into {l}"),
            TaskKind::Compose(l) => format!("summarize the dialogue and translate it into {l}"),
        }
    }

    /// Applies the task's deterministic transform.
    pub fn apply(self, input: &str) -> String {
        match self {
            TaskKind::Copy => normalize(input),
            TaskKind::Summarize => summarize(input),
            TaskKind::Translate(l) => l.cipher().apply(input),
            TaskKind::Compose(l) => l.cipher().apply(&summarize(input)),
        }
    }

    /// Short CLI name: `copy`, `sum`, `trans-es`, `comp-es`, ...
    pub fn cli_name(self) -> String {
        match self {
            TaskKind::Copy => "copy".into(),
            TaskKind::Summarize => "sum".into(),
            TaskKind::Translate(l) => format!("trans-{l}"),
            TaskKind::Compose(l) => format!("comp-{l}"),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.cli_name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    /// Accepts `sum`, `trans`, `comp` (Spanish by default) and the
    /// `-es`/`-de` suffixed forms.
    fn from_str(s: &str) -> Result<Self> {
        let (base, lang) = match s.split_once('-') {
            Some((b, l)) => (b, l.parse()?),
            None => (s, Lang::Es),
        };
        match base {
            "copy" => Ok(TaskKind::Copy),
            "sum" => Ok(TaskKind::Summarize),
            "trans" => Ok(TaskKind::Translate(lang)),
            "comp" => Ok(TaskKind::Compose(lang)),
            _ => Err(Error::Config(format!(
                "unknown task {s:?} (expected sum, trans[-es|-de], comp[-es|-de])"
            ))),
        }
    }
}

/// Named description of a task: its transform, tag token and wording.
#[derive(Clone, Debug)]
pub struct TaskDef {
    pub name: String,
    pub kind: TaskKind,
    pub tag: String,
    pub description: String,
}

impl From<TaskKind> for TaskDef {
    fn from(kind: TaskKind) -> Self {
        Self {
            name: kind.cli_name(),
            kind,
            tag: kind.tag(),
            description: kind.description(),
        }
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn is_name(token: &str) -> bool {
    NAMES.contains(&token)
}

/// The extractive summary rule: for each speaker, in order of first
/// appearance, emit the speaker's name followed by the words of the first
/// clause of their first turn. A turn starts at `name :`; a clause ends at
/// `,` or `.`.
pub fn summarize(dialogue: &str) -> String {
    let lowered = dialogue.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    let mut seen: Vec<&str> = Vec::new();
    let mut out: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let turn_start = is_name(tokens[i]) && tokens.get(i + 1) == Some(&":");
        if !turn_start {
            i += 1;
            continue;
        }
        let speaker = tokens[i];
        let first = !seen.contains(&speaker);
        if first {
            seen.push(speaker);
            out.push(speaker);
        }
        i += 2;
        let mut in_first_clause = true;
        while i < tokens.len() && !(is_name(tokens[i]) && tokens.get(i + 1) == Some(&":")) {
            match tokens[i] {
                "," | "." => in_first_clause = false,
                w if first && in_first_clause => out.push(w),
                _ => {}
            }
            i += 1;
        }
    }
    out.join(" ")
}

fn words<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> Vec<&'static str> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| *SOURCE_WORDS.choose(rng).expect("non-empty")).collect()
}

/// A synthetic chat of 2–3 speakers and 3–4 turns.
pub fn random_dialogue<R: Rng>(rng: &mut R) -> String {
    let n_speakers = rng.random_range(2..=3);
    let speakers: Vec<&str> = NAMES.choose_multiple(rng, n_speakers).copied().collect();
    let order = loop {
        let n_turns = rng.random_range(n_speakers.max(3)..=4);
        let mut order: Vec<&str> = Vec::with_capacity(n_turns);
        for _ in 0..n_turns {
            let choices: Vec<&str> = speakers
                .iter()
                .copied()
                .filter(|s| order.last() != Some(s))
                .collect();
            order.push(choices.choose(rng).copied().expect("at least two speakers"));
        }
        if speakers.iter().all(|s| order.contains(s)) {
            break order;
        }
    };
    let mut out: Vec<&str> = Vec::new();
    for speaker in order {
        out.push(speaker);
        out.push(":");
        out.extend(words(rng, 2, 3));
        if rng.random_bool(0.6) {
            out.push(",");
            out.extend(words(rng, 1, 2));
        }
        out.push(".");
    }
    out.join(" ")
}

/// A short source-language sentence with occasional names and punctuation.
pub fn random_sentence<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(3..=12);
    (0..n)
        .map(|_| {
            let roll: f64 = rng.random();
            if roll < 0.8 {
                *SOURCE_WORDS.choose(rng).expect("non-empty")
            } else if roll < 0.92 {
                *NAMES.choose(rng).expect("non-empty")
            } else {
                *PUNCT.choose(rng).expect("non-empty")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Any-word sequence used for pretraining, covering every target dictionary.
fn random_any<R: Rng>(rng: &mut R) -> String {
    let vocab = Vocab::global();
    let words: Vec<&str> = vocab.words().map(|(_, w)| w).collect();
    let n = rng.random_range(3..=16);
    (0..n).map(|_| *words.choose(rng).expect("non-empty")).collect::<Vec<_>>().join(" ")
}

fn input_for<R: Rng>(task: TaskKind, rng: &mut R) -> String {
    match task {
        TaskKind::Summarize | TaskKind::Compose(_) => random_dialogue(rng),
        TaskKind::Translate(_) => random_sentence(rng),
        TaskKind::Copy => match rng.random_range(0..4) {
            0 | 1 => random_dialogue(rng),
            2 => random_sentence(rng),
            _ => random_any(rng),
        },
    }
}

/// `n` examples with distinct inputs, all labelled `split`.
pub fn generate(task: TaskKind, seed: u64, n: usize, split: Split) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task_salt(task));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let input = input_for(task, &mut rng);
        if seen.insert(input.clone()) {
            out.push(Example {
                target: task.apply(&input),
                input,
                split,
            });
        }
    }
    out
}

fn task_salt(task: TaskKind) -> u64 {
    match task {
        TaskKind::Copy => 0x0c09,
        TaskKind::Summarize => 0x5a11,
        TaskKind::Translate(Lang::Es) => 0x7e5,
        TaskKind::Translate(Lang::De) => 0x7de,
        TaskKind::Compose(Lang::Es) => 0xc0e5,
        TaskKind::Compose(Lang::De) => 0xc0de,
    }
}

pub fn gen_task1_summarize(seed: u64, n: usize) -> Vec<Example> {
    generate(TaskKind::Summarize, seed, n, Split::Train)
}

pub fn gen_task2_translate(lang: Lang, seed: u64, n: usize) -> Vec<Example> {
    generate(TaskKind::Translate(lang), seed, n, Split::Train)
}

pub fn gen_compositional(lang: Lang, seed: u64, n: usize) -> Vec<Example> {
    generate(TaskKind::Compose(lang), seed, n, Split::Train)
}

/// Examples per split. The default keeps validation and test at about 6%
/// of train each, close to the summarization corpus proportions
/// (14,732 / 818 / 819).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 2000,
            validation: 120,
            test: 120,
        }
    }
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

/// Generates a full dataset with disjoint inputs across splits.
pub fn build_dataset(task: TaskKind, seed: u64, sizes: SplitSizes) -> Vec<Example> {
    let mut all = generate(task, seed, sizes.total(), Split::Train);
    for (i, ex) in all.iter_mut().enumerate() {
        ex.split = if i < sizes.train {
            Split::Train
        } else if i < sizes.train + sizes.validation {
            Split::Validation
        } else {
            Split::Test
        };
    }
    all
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl DatasetStats {
    pub fn of(examples: &[Example]) -> Self {
        let mut s = Self::default();
        for ex in examples {
            match ex.split {
                Split::Train => s.train += 1,
                Split::Validation => s.validation += 1,
                Split::Test => s.test += 1,
            }
        }
        s
    }
}

pub fn split_of(examples: &[Example], split: Split) -> Vec<Example> {
    examples.iter().filter(|e| e.split == split).cloned().collect()
}
