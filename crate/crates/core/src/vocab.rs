//! Whitespace tokenisation and corpus vocabularies.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::encoder::TokenBatch;
use crate::error::{Error, Result};

pub const UNK_ID: u32 = 0;
pub const UNK_TOKEN: &str = "<unk>";

/// Token ↔ id map. Id 0 is reserved for unknown tokens; corpus tokens get ids
/// from 1 in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens = vec![UNK_TOKEN.to_string()];
        let mut ids = HashMap::new();
        for s in sentences {
            for tok in s.split_whitespace() {
                if !ids.contains_key(tok) {
                    ids.insert(tok.to_string(), tokens.len() as u32);
                    tokens.push(tok.to_string());
                }
            }
        }
        Self { tokens, ids }
    }

    /// Number of ids including UNK.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, sentence: &str) -> Vec<u32> {
        sentence.split_whitespace().map(|t| self.id(t)).collect()
    }

    pub fn batch<'a>(&self, sentences: impl IntoIterator<Item = &'a str>) -> Result<TokenBatch> {
        TokenBatch::new(sentences.into_iter().map(|s| self.tokenize(s)).collect())
    }
}

/// One sentence per non-blank line, surrounding whitespace trimmed.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}
