//! Token vocabularies with reserved placeholder entries.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::TokenSeq;

pub const PAD: &str = "<PAD>";
pub const UNK: &str = "<UNK>";
pub const MASK: &str = "<MASK>";
pub const CLS: &str = "<CLS>";
pub const LABEL: &str = "<label>";
pub const IMM: &str = "<imm>";

/// Reserved entries, in id order.
pub const SPECIALS: [&str; 6] = [PAD, UNK, MASK, CLS, LABEL, IMM];

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const MASK_ID: usize = 2;
pub const CLS_ID: usize = 3;
pub const LABEL_ID: usize = 4;
pub const IMM_ID: usize = 5;

pub fn is_special(text: &str) -> bool {
    SPECIALS.contains(&text)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_count must be at least 1")]
    ZeroMinCount,
    #[error("duplicate vocabulary entry {0:?}")]
    Duplicate(String),
    #[error("vocabulary is missing reserved entry {0:?} at id {1}")]
    MissingSpecial(String, usize),
}

/// Bijective token text <-> dense id map. Ids `0..6` are [`SPECIALS`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary holding only the reserved entries.
    pub fn specials_only() -> Self {
        Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    /// Rebuilds a vocabulary from its id-ordered entries.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        for (id, s) in SPECIALS.iter().enumerate() {
            if tokens.get(id).map(String::as_str) != Some(*s) {
                return Err(VocabError::MissingSpecial(s.to_string(), id));
            }
        }
        let mut index = BTreeMap::new();
        for (id, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), id).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn id_or_unk(&self, text: &str) -> usize {
        self.id(text).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, text: &str) -> bool {
        self.index.contains_key(text)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, seq: &TokenSeq) -> Vec<usize> {
        seq.tokens.iter().map(|t| self.id_or_unk(&t.text)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = VocabError;

    fn try_from(tokens: Vec<String>) -> Result<Self, Self::Error> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Specials plus every token text seen at least `min_count` times. Regular
/// entries are ordered by descending frequency, ties by text.
pub fn build_vocab(corpus: &[TokenSeq], min_count: usize) -> Result<Vocabulary, VocabError> {
    if corpus.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(VocabError::ZeroMinCount);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for seq in corpus {
        for t in &seq.tokens {
            *counts.entry(t.text.as_str()).or_default() += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_count && !is_special(t))
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend(entries.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}
