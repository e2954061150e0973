//! Token vocabulary with reserved indices for padding, sequence start and
//! end, and unknown words.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

#[derive(Debug, Clone, PartialEq)]
pub enum VocabError {
    MissingReserved { index: usize, expected: &'static str },
    DuplicateToken { token: String },
}

impl fmt::Display for VocabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingReserved { index, expected } => {
                write!(f, "reserved slot {index} must hold {expected}")
            }
            Self::DuplicateToken { token } => write!(f, "token '{token}' appears twice"),
        }
    }
}

impl std::error::Error for VocabError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from tokenized training captions: words seen at least
    /// `min_freq` times are kept, ordered by descending count with
    /// alphabetical tie-break, after the four reserved slots.
    pub fn build<'a, I>(captions: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a Vec<String>>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for caption in captions {
            for tok in caption {
                *counts.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_freq)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
        Self::from_tokens(tokens).expect("construction preserves invariants")
    }

    /// Rebuilds from an explicit token list (checkpoint restore).
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        for (index, expected) in RESERVED.iter().enumerate() {
            if tokens.get(index).map(String::as_str) != Some(*expected) {
                return Err(VocabError::MissingReserved { index, expected });
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(VocabError::DuplicateToken { token: t.clone() });
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Index of a word, falling back to the unknown token.
    pub fn encode(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Reference tokens plus the closing end token, ready for the loss.
    pub fn encode_reference(&self, words: &[String]) -> Vec<usize> {
        let mut ids: Vec<usize> = words.iter().map(|w| self.encode(w)).collect();
        ids.push(END);
        ids
    }

    /// Words of a decoded sequence, dropping specials.
    pub fn decode_words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i > UNK)
            .map(|&i| self.tokens[i].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        crate::text::tokenize(s)
    }

    #[test]
    fn reserved_tokens_occupy_fixed_slots() {
        let caps = vec![toks("a red circle"), toks("a blue square"), toks("a red kite")];
        let v = Vocabulary::build(&caps, 1);
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(START), "<s>");
        assert_eq!(v.token(END), "</s>");
        assert_eq!(v.token(UNK), "<unk>");
        // "a" (3) then "red" (2), then the singletons alphabetically.
        assert_eq!(v.token(4), "a");
        assert_eq!(v.token(5), "red");
        assert_eq!(v.token(6), "blue");
    }

    #[test]
    fn min_freq_maps_rare_words_to_unk() {
        let caps = vec![toks("a red circle"), toks("a red square")];
        let v = Vocabulary::build(&caps, 2);
        assert_eq!(v.encode("circle"), UNK);
        assert_ne!(v.encode("red"), UNK);
    }

    #[test]
    fn encode_reference_appends_end() {
        let caps = vec![toks("a red circle"), toks("a red circle")];
        let v = Vocabulary::build(&caps, 1);
        let ids = v.encode_reference(&toks("a red circle"));
        assert_eq!(ids.last(), Some(&END));
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn token_list_round_trip() {
        let caps = vec![toks("a red circle above a blue square")];
        let v = Vocabulary::build(&caps, 1);
        let back = Vocabulary::from_tokens(v.tokens().to_vec()).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn from_tokens_validates_reserved() {
        assert!(matches!(
            Vocabulary::from_tokens(vec!["<pad>".into(), "x".into()]),
            Err(VocabError::MissingReserved { .. })
        ));
    }
}
