use crate::tasks::{TaskKind, TokenId, Vocab};

/// `<bos> tag input… <sep>`; the model continues with the answer.
pub fn prompt_tokens(task: TaskKind, input: &str) -> Vec<TokenId> {
    let v = Vocab::global();
    let mut out = vec![v.bos(), task.tag_id()];
    out.extend(v.encode(input));
    out.push(v.sep());
    out
}

/// A teacher-forced training sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingSequence {
    /// Prompt followed by target and `<eos>`, minus the final token.
    pub tokens: Vec<TokenId>,
    /// Next-token labels, `None` over the prompt so only the answer is scored.
    pub labels: Vec<Option<TokenId>>,
}

impl TrainingSequence {
    pub fn new(task: TaskKind, input: &str, target: &str) -> Self {
        let v = Vocab::global();
        let prompt = prompt_tokens(task, input);
        let mut full = prompt.clone();
        full.extend(v.encode(target));
        full.push(v.eos());
        let labels = (1..full.len())
            .map(|i| (i >= prompt.len()).then_some(full[i]))
            .collect();
        full.pop();
        Self {
            tokens: full,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
