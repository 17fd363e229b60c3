//! Answer and question-word vocabularies.

use std::collections::{BTreeMap, HashMap};

use super::stats::normalize_words;
use super::union::UnionDataset;
use super::DatasetError;

pub const BEGIN_TOKEN: &str = "<begin>";
pub const END_TOKEN: &str = "<end>";
pub const UNK_TOKEN: &str = "<unk>";

/// Decoder output vocabulary with begin/end/unknown at fixed indices 0/1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

pub const BEGIN_INDEX: usize = 0;
pub const END_INDEX: usize = 1;
pub const UNK_INDEX: usize = 2;

impl AnswerVocabulary {
    /// Rebuilds a vocabulary from an ordered token list (checkpoint load).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DatasetError> {
        if tokens.len() < 3
            || tokens[BEGIN_INDEX] != BEGIN_TOKEN
            || tokens[END_INDEX] != END_TOKEN
            || tokens[UNK_INDEX] != UNK_TOKEN
        {
            return Err(DatasetError::Validation {
                message: "vocabulary must start with the begin/end/unknown specials".into(),
            });
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(DatasetError::Validation {
                    message: format!("duplicate vocabulary token `{t}`"),
                });
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index for a word, falling back to the unknown token.
    pub fn lookup_or_unk(&self, token: &str) -> usize {
        self.lookup(token).unwrap_or(UNK_INDEX)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }
}

/// Builds the answer vocabulary from the union dataset: specials followed by
/// the most frequent whitespace-split answer words, ties broken
/// lexicographically, capped at `max_size` entries total.
pub fn build_vocabulary(
    union: &UnionDataset,
    max_size: usize,
) -> Result<AnswerVocabulary, DatasetError> {
    if max_size < 4 {
        return Err(DatasetError::Validation {
            message: format!("vocabulary max_size must be at least 4, got {max_size}"),
        });
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for record in &union.records {
        for answer in &record.answers {
            for word in normalize_words(answer) {
                *counts.entry(word).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let mut tokens = vec![
        BEGIN_TOKEN.to_string(),
        END_TOKEN.to_string(),
        UNK_TOKEN.to_string(),
    ];
    for (word, _) in ranked {
        if tokens.len() >= max_size {
            break;
        }
        if word == BEGIN_TOKEN || word == END_TOKEN || word == UNK_TOKEN {
            continue;
        }
        tokens.push(word);
    }
    AnswerVocabulary::from_tokens(tokens)
}

/// Question-word lookup table with the unknown word at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl WordVocab {
    /// Most frequent normalized words across the given texts, ties broken
    /// lexicographically, capped at `max_size` entries including `<unk>`.
    pub fn build<'a>(texts: impl Iterator<Item = &'a str>, max_size: usize) -> Self {
        assert!(max_size >= 1);
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for word in normalize_words(text) {
                *counts.entry(word).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut words = vec![UNK_TOKEN.to_string()];
        for (word, _) in ranked {
            if words.len() >= max_size {
                break;
            }
            if word != UNK_TOKEN {
                words.push(word);
            }
        }
        Self::from_words(words).expect("constructed words are unique")
    }

    pub fn from_words(words: Vec<String>) -> Result<Self, DatasetError> {
        if words.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(DatasetError::Validation {
                message: "question vocabulary must start with the unknown word".into(),
            });
        }
        let mut index = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(DatasetError::Validation {
                    message: format!("duplicate question word `{w}`"),
                });
            }
        }
        Ok(Self { words, index })
    }

    /// Index of a word; unknown words map to index 0.
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false // <unk> is always present
    }
}
