//! Word-level text vocabulary and SMILES/SELFIES molecule vocabularies.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::molstring::split_selfies;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Token list with the four specials at ids 0..4 and the rest sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn build<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = tokens.into_iter().map(Into::into).filter(|t| !SPECIALS.contains(&t.as_str())).collect();
        let mut all: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        all.extend(set);
        Vocab::from(all)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Lowercased words; punctuation other than '-' and '\'' becomes its own token.
pub fn text_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '-' || c == '\'' {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

/// SMILES split into bracket atoms, two-letter halogens, `%nn` ring labels
/// and single characters. `None` on an unterminated bracket or `%`.
pub fn smiles_tokens(smiles: &str) -> Option<Vec<String>> {
    let b = smiles.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let end = match b[i] {
            b'[' => i + smiles[i..].find(']')? + 1,
            b'C' if b.get(i + 1) == Some(&b'l') => i + 2,
            b'B' if b.get(i + 1) == Some(&b'r') => i + 2,
            b'%' => {
                if b.len() < i + 3 || !b[i + 1].is_ascii_digit() || !b[i + 2].is_ascii_digit() {
                    return None;
                }
                i + 3
            }
            _ => i + smiles[i..].chars().next()?.len_utf8(),
        };
        out.push(smiles[i..end].to_owned());
        i = end;
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MolSyntax {
    #[default]
    Smiles,
    Selfies,
}

impl MolSyntax {
    pub fn split(self, s: &str) -> Option<Vec<String>> {
        match self {
            MolSyntax::Smiles => smiles_tokens(s),
            MolSyntax::Selfies => Some(split_selfies(s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextTokenizer {
    pub vocab: Vocab,
}

impl TextTokenizer {
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        TextTokenizer { vocab: Vocab::build(texts.into_iter().flat_map(text_words)) }
    }

    /// Unknown words map to UNK.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text_words(text).iter().map(|w| self.vocab.id(w).unwrap_or(UNK)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolTokenizer {
    pub syntax: MolSyntax,
    pub vocab: Vocab,
}

impl MolTokenizer {
    pub fn fit<'a>(syntax: MolSyntax, mols: impl IntoIterator<Item = &'a str>) -> Self {
        let tokens = mols.into_iter().flat_map(|m| syntax.split(m).unwrap_or_default());
        MolTokenizer { syntax, vocab: Vocab::build(tokens) }
    }

    /// Token ids without BOS/EOS; fails on any token outside the vocabulary.
    pub fn encode(&self, mol: &str) -> Result<Vec<u32>, ModelError> {
        let parts = self.syntax.split(mol).ok_or_else(|| ModelError::Vocab(format!("cannot split {mol:?}")))?;
        parts
            .iter()
            .map(|t| self.vocab.id(t).filter(|&id| id > UNK).ok_or_else(|| ModelError::Vocab(format!("token {t:?}"))))
            .collect()
    }

    /// Concatenates tokens up to the first EOS, skipping other specials.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i > UNK)
            .filter_map(|&i| self.vocab.token(i))
            .collect()
    }
}
