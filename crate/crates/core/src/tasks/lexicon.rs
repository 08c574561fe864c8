//! Fixed word pools and the word-level substitution dictionaries that play
//! the role of target languages.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NAMES: [&str; 6] = ["anna", "bob", "carla", "dan", "eva", "finn"];

pub const PUNCT: [&str; 3] = [":", ",", "."];

pub const SOURCE_WORDS: [&str; 24] = [
    "meet", "park", "lunch", "tomorrow", "call", "movie", "bring", "snacks", "late", "train",
    "dinner", "party", "book", "coffee", "friday", "beach", "help", "work", "game", "now", "see",
    "go", "home", "sorry",
];

const ES: [&str; 24] = [
    "quedar", "parque", "almuerzo", "mañana", "llamar", "película", "traer", "aperitivos",
    "tarde", "tren", "cena", "fiesta", "libro", "café", "viernes", "playa", "ayuda", "trabajo",
    "partido", "ahora", "ver", "ir", "casa", "perdón",
];

const DE: [&str; 24] = [
    "treffen", "garten", "mittag", "morgen", "anrufen", "film", "bringen", "imbiss", "spät",
    "zug", "abendessen", "feier", "buch", "kaffee", "freitag", "strand", "hilfe", "arbeit",
    "spiel", "jetzt", "sehen", "gehen", "haus", "entschuldigung",
];

/// A target "language": a bijective word-level dictionary over
/// [`SOURCE_WORDS`]. Names and punctuation pass through unchanged.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    Es,
    De,
}

impl Lang {
    pub const ALL: [Lang; 2] = [Lang::Es, Lang::De];

    pub fn code(self) -> &'static str {
        match self {
            Lang::Es => "es",
            Lang::De => "de",
        }
    }

    fn targets(self) -> &'static [&'static str; 24] {
        match self {
            Lang::Es => &ES,
            Lang::De => &DE,
        }
    }

    /// `(source, target)` pairs in source-word order.
    pub fn dictionary(self) -> Vec<(&'static str, &'static str)> {
        SOURCE_WORDS.iter().copied().zip(self.targets().iter().copied()).collect()
    }

    pub fn cipher(self) -> Cipher {
        Cipher::new(self)
    }
}

impl fmt::Display for Lang {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Lang {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "es" => Ok(Lang::Es),
            "de" => Ok(Lang::De),
            other => Err(Error::Config(format!(
                "unknown target mapping {other:?} (expected one of: es, de)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cipher {
    lang: Lang,
    forward: HashMap<&'static str, &'static str>,
    inverse: HashMap<&'static str, &'static str>,
}

impl Cipher {
    fn new(lang: Lang) -> Self {
        let pairs = lang.dictionary();
        Self {
            lang,
            forward: pairs.iter().copied().collect(),
            inverse: pairs.iter().map(|&(s, t)| (t, s)).collect(),
        }
    }

    pub fn lang(&self) -> Lang {
        self.lang
    }

    pub fn map_word<'a>(&self, word: &'a str) -> &'a str {
        self.forward.get(word).copied().unwrap_or(word)
    }

    pub fn unmap_word<'a>(&self, word: &'a str) -> &'a str {
        self.inverse.get(word).copied().unwrap_or(word)
    }

    pub fn apply(&self, text: &str) -> String {
        text.split_whitespace().map(|w| self.map_word(w)).collect::<Vec<_>>().join(" ")
    }

    pub fn invert(&self, text: &str) -> String {
        text.split_whitespace().map(|w| self.unmap_word(w)).collect::<Vec<_>>().join(" ")
    }

    pub fn pairs(&self) -> Vec<(&'static str, &'static str)> {
        self.lang.dictionary()
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn dictionaries_have_no_collisions() {
        let mut all: HashSet<&str> = HashSet::new();
        for w in SOURCE_WORDS.iter().chain(NAMES.iter()).chain(PUNCT.iter()) {
            assert!(all.insert(w), "duplicate source token {w}");
        }
        for lang in Lang::ALL {
            for (_, t) in lang.dictionary() {
                assert!(all.insert(t), "{lang}: target {t} collides");
            }
        }
    }

    #[test]
    fn inverse_recovers_input() {
        let c = Lang::Es.cipher();
        let text = "anna : meet park , bring snacks .";
        let out = c.apply(text);
        assert_eq!(out, "anna : quedar parque , traer aperitivos .");
        assert_eq!(c.invert(&out), text);
    }

    #[test]
    fn lang_parses() {
        assert_eq!("de".parse::<Lang>().unwrap(), Lang::De);
        assert!("fr".parse::<Lang>().is_err());
    }
}
