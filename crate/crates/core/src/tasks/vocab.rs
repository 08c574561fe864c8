use std::collections::HashMap;
use std::sync::OnceLock;

use super::lexicon::{Lang, NAMES, PUNCT, SOURCE_WORDS};

pub type TokenId = usize;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const SEP: &str = "<sep>";

/// Task-tag tokens. A tag stands in for the natural-language system prompt
/// of an instruction-tuned model.
pub const TAG_COPY: &str = "<copy>";
pub const TAG_SUMMARIZE: &str = "<sum>";

pub fn translate_tag(lang: Lang) -> String {
    format!("<tr-{}>", lang.code())
}

pub fn compose_tag(lang: Lang) -> String {
    format!("<sum+tr-{}>", lang.code())
}

/// Closed word-level vocabulary shared by every model in the crate.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// The process-wide vocabulary.
    pub fn global() -> &'static Vocab {
        static VOCAB: OnceLock<Vocab> = OnceLock::new();
        VOCAB.get_or_init(Vocab::build)
    }

    fn build() -> Self {
        let mut tokens: Vec<String> = [PAD, BOS, EOS, UNK, SEP, TAG_COPY, TAG_SUMMARIZE]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for lang in Lang::ALL {
            tokens.push(translate_tag(lang));
            tokens.push(compose_tag(lang));
        }
        tokens.extend(PUNCT.iter().map(|s| s.to_string()));
        tokens.extend(NAMES.iter().map(|s| s.to_string()));
        tokens.extend(SOURCE_WORDS.iter().map(|s| s.to_string()));
        for lang in Lang::ALL {
            tokens.extend(lang.dictionary().iter().map(|(_, t)| t.to_string()));
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Id of a token known to be in the vocabulary.
    pub fn special(&self, token: &str) -> TokenId {
        self.id(token)
            .unwrap_or_else(|| panic!("{token} is not in the vocabulary"))
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn pad(&self) -> TokenId {
        self.special(PAD)
    }
    pub fn bos(&self) -> TokenId {
        self.special(BOS)
    }
    pub fn eos(&self) -> TokenId {
        self.special(EOS)
    }
    pub fn unk(&self) -> TokenId {
        self.special(UNK)
    }
    pub fn sep(&self) -> TokenId {
        self.special(SEP)
    }

    pub fn is_control(&self, id: TokenId) -> bool {
        self.token(id).starts_with('<')
    }

    /// Lowercases, splits on whitespace and maps unknown words to `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .map(|w| self.id(&w.to_lowercase()).unwrap_or_else(|| self.unk()))
            .collect()
    }

    /// Joins non-control tokens with single spaces.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| !self.is_control(id))
            .map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn words(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.starts_with('<'))
            .map(|(i, t)| (i, t.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_unique() {
        let v = Vocab::global();
        assert_eq!(v.index.len(), v.len());
    }

    #[test]
    fn encode_decode_round_trip() {
        let v = Vocab::global();
        let text = "anna : meet park , bring snacks .";
        assert_eq!(v.decode(&v.encode(text)), text);
        assert_eq!(v.encode("ANNA"), v.encode("anna"));
        assert_eq!(v.encode("zebra"), vec![v.unk()]);
    }

    #[test]
    fn control_tokens_are_dropped_on_decode() {
        let v = Vocab::global();
        let ids = vec![v.bos(), v.special(TAG_SUMMARIZE), v.id("bob").unwrap(), v.eos()];
        assert_eq!(v.decode(&ids), "bob");
    }
}
