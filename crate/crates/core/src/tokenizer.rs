//! Local tokenizers over a published vocabulary.
//!
//! The vocabulary file is a JSON object mapping token strings to integer ids,
//! the same shape model vendors publish.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub id: TokenId,
    pub text: String,
    /// Character range in the source text.
    pub offset: Range<usize>,
}

pub trait Tokenizer: Send + Sync {
    fn encode(&self, text: &str) -> Result<Vec<Token>>;
    fn token_id(&self, token: &str) -> Option<TokenId>;
    fn token_str(&self, id: TokenId) -> Option<&str>;
    fn vocab_size(&self) -> usize;
}

#[derive(Debug, Clone, Default)]
pub struct Vocab {
    to_id: HashMap<String, TokenId>,
    to_str: Vec<Option<String>>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = HashMap::new();
        for (i, t) in tokens.into_iter().enumerate() {
            map.insert(t.into(), i as TokenId);
        }
        Self::from_map(map)
    }

    pub fn from_map(to_id: HashMap<String, TokenId>) -> Self {
        let size = to_id.values().map(|&i| i as usize + 1).max().unwrap_or(0);
        let mut to_str = vec![None; size];
        for (tok, &id) in &to_id {
            to_str[id as usize] = Some(tok.clone());
        }
        Vocab { to_id, to_str }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let map: HashMap<String, TokenId> = serde_json::from_str(json)?;
        if map.is_empty() {
            return Err(Error::InvalidInput("vocabulary is empty".into()));
        }
        Ok(Self::from_map(map))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let ordered: std::collections::BTreeMap<&String, &TokenId> = self.to_id.iter().collect();
        serde_json::to_string(&ordered).expect("vocab serializes")
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.to_str.get(id as usize).and_then(|t| t.as_deref())
    }

    /// One past the largest id.
    pub fn size(&self) -> usize {
        self.to_str.len()
    }

    fn max_token_chars(&self) -> usize {
        self.to_id.keys().map(|t| t.chars().count()).max().unwrap_or(0)
    }
}

/// One token per whitespace-separated word.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    vocab: Vocab,
    unk: Option<TokenId>,
}

impl WordTokenizer {
    pub fn new(vocab: Vocab, unk: Option<&str>) -> Result<Self> {
        let unk = match unk {
            Some(u) => Some(
                vocab
                    .get(u)
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown-token {u:?} not in vocab")))?,
            ),
            None => None,
        };
        Ok(Self { vocab, unk })
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }
}

/// Word spans of `text` in character offsets.
pub fn word_spans(text: &str) -> Vec<(Range<usize>, &str)> {
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let mut char_idx = 0;
    for (byte_idx, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if let Some((cs, bs)) = start.take() {
                out.push((cs..char_idx, &text[bs..byte_idx]));
            }
        } else if start.is_none() {
            start = Some((char_idx, byte_idx));
        }
        char_idx += 1;
    }
    if let Some((cs, bs)) = start {
        out.push((cs..char_idx, &text[bs..]));
    }
    out
}

impl Tokenizer for WordTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        word_spans(text)
            .into_iter()
            .map(|(offset, word)| {
                let id = self
                    .vocab
                    .get(word)
                    .or(self.unk)
                    .ok_or_else(|| Error::InvalidInput(format!("word {word:?} not in vocabulary")))?;
                Ok(Token { id, text: word.to_string(), offset })
            })
            .collect()
    }

    fn token_id(&self, token: &str) -> Option<TokenId> {
        self.vocab.get(token)
    }

    fn token_str(&self, id: TokenId) -> Option<&str> {
        self.vocab.token(id)
    }

    fn vocab_size(&self) -> usize {
        self.vocab.size()
    }
}

/// Greedy longest-match tokenizer for subword vocabularies.
///
/// With a space marker set (GPT-2 style vocabularies use `"Ġ"`), each space
/// is rewritten to the marker before matching so `" the"` matches `"Ġthe"`.
/// This approximates byte-pair encoding; texts where BPE merges disagree
/// with longest-match will tokenize differently from the vendor tokenizer.
#[derive(Debug, Clone)]
pub struct GreedyTokenizer {
    vocab: Vocab,
    space_marker: Option<String>,
    max_chars: usize,
}

impl GreedyTokenizer {
    pub fn new(vocab: Vocab, space_marker: Option<&str>) -> Self {
        let max_chars = vocab.max_token_chars();
        Self {
            vocab,
            space_marker: space_marker.map(str::to_owned),
            max_chars,
        }
    }
}

impl Tokenizer for GreedyTokenizer {
    fn encode(&self, text: &str) -> Result<Vec<Token>> {
        let src: Vec<char> = text.chars().collect();
        let mapped: Vec<String> = src
            .iter()
            .map(|&c| match (&self.space_marker, c) {
                (Some(m), ' ') => m.clone(),
                _ => c.to_string(),
            })
            .collect();
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < src.len() {
            let mut found = None;
            let mut candidate = String::new();
            for end in pos..src.len().min(pos + self.max_chars) {
                candidate.push_str(&mapped[end]);
                if let Some(id) = self.vocab.get(&candidate) {
                    found = Some((end + 1, id, candidate.clone()));
                }
            }
            let (end, id, tok) = found.ok_or_else(|| {
                Error::InvalidInput(format!("no vocabulary entry matches at character {pos}"))
            })?;
            out.push(Token { id, text: tok, offset: pos..end });
            pos = end;
        }
        Ok(out)
    }

    fn token_id(&self, token: &str) -> Option<TokenId> {
        self.vocab.get(token)
    }

    fn token_str(&self, id: TokenId) -> Option<&str> {
        self.vocab.token(id)
    }

    fn vocab_size(&self) -> usize {
        self.vocab.size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_spans_use_char_offsets() {
        let spans = word_spans("  héllo wörld\tx ");
        let got: Vec<_> = spans.iter().map(|(r, w)| (r.clone(), *w)).collect();
        assert_eq!(got, vec![(2..7, "héllo"), (8..13, "wörld"), (14..15, "x")]);
    }

    #[test]
    fn word_tokenizer_unknowns() {
        let vocab = Vocab::from_tokens(["<unk>", "a", "b"]);
        let strict = WordTokenizer::new(vocab.clone(), None).unwrap();
        assert!(strict.encode("a c").is_err());
        let lenient = WordTokenizer::new(vocab, Some("<unk>")).unwrap();
        let ids: Vec<_> = lenient.encode("a c b").unwrap().iter().map(|t| t.id).collect();
        assert_eq!(ids, vec![1, 0, 2]);
    }

    #[test]
    fn greedy_longest_match() {
        let vocab = Vocab::from_tokens(["t", "h", "e", "th", "the", "Ġ", "Ġc", "Ġcat", "a"]);
        let tok = GreedyTokenizer::new(vocab, Some("Ġ"));
        let got: Vec<_> = tok.encode("the cat").unwrap().into_iter().map(|t| (t.text, t.offset)).collect();
        assert_eq!(got, vec![("the".to_string(), 0..3), ("Ġcat".to_string(), 3..7)]);
        assert!(tok.encode("dog").is_err());
    }

    #[test]
    fn vocab_json_round_trip() {
        let v = Vocab::from_json(r#"{"a": 0, "b": 2}"#).unwrap();
        assert_eq!(v.size(), 3);
        assert_eq!(v.token(1), None);
        assert_eq!(v.token(2), Some("b"));
        let again = Vocab::from_json(&v.to_json()).unwrap();
        assert_eq!(again.get("b"), Some(2));
        assert!(Vocab::from_json("{}").is_err());
    }
}
