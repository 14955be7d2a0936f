use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Member,
    Nonmember,
}

impl Label {
    pub fn is_member(self) -> bool {
        self == Label::Member
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Member => "member",
            Label::Nonmember => "nonmember",
        })
    }
}

/// Original text or a synonym rewrite of it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    #[default]
    Ori,
    Syn,
}

/// One candidate text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    /// Half-open character range of the portion to score.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<Range<usize>>,
    #[serde(default)]
    pub form: Form,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let sample = Sample {
            id: id.into(),
            text: text.into(),
            label: None,
            created_at: None,
            span: None,
            form: Form::Ori,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_span(mut self, span: Range<usize>) -> Result<Self> {
        self.span = Some(span);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::InvalidInput(format!("sample {} has empty text", self.id)));
        }
        if let Some(span) = &self.span {
            let chars = self.text.chars().count();
            if span.start >= span.end || span.end > chars {
                return Err(Error::InvalidInput(format!(
                    "sample {} span {}..{} outside text of {} chars",
                    self.id, span.start, span.end, chars
                )));
            }
        }
        Ok(())
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

/// Tokens of one text with their conditional log-probabilities under a model.
///
/// The leading token has no conditional in echo-style APIs, so backends drop
/// it and record that in `first_excluded`; `tokens` and `logprobs` then cover
/// positions `1..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTokens {
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    #[serde(default = "default_true")]
    pub first_excluded: bool,
    /// Character offsets of each scored token in the source text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<Range<usize>>>,
}

fn default_true() -> bool {
    true
}

impl ScoredTokens {
    pub fn new(tokens: Vec<String>, logprobs: Vec<f64>) -> Result<Self> {
        let st = ScoredTokens {
            tokens,
            logprobs,
            first_excluded: true,
            offsets: None,
        };
        st.validate()?;
        Ok(st)
    }

    /// Builds from bare log-probabilities with placeholder token strings.
    pub fn from_logprobs(logprobs: Vec<f64>) -> Result<Self> {
        let tokens = (0..logprobs.len()).map(|i| format!("t{i}")).collect();
        Self::new(tokens, logprobs)
    }

    pub fn with_offsets(mut self, offsets: Vec<Range<usize>>) -> Result<Self> {
        if offsets.len() != self.tokens.len() {
            return Err(Error::InvalidInput(format!(
                "{} offsets for {} tokens",
                offsets.len(),
                self.tokens.len()
            )));
        }
        self.offsets = Some(offsets);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.logprobs.is_empty() {
            return Err(Error::InvalidInput("no scored tokens".into()));
        }
        if self.tokens.len() != self.logprobs.len() {
            return Err(Error::InvalidInput(format!(
                "{} tokens but {} logprobs",
                self.tokens.len(),
                self.logprobs.len()
            )));
        }
        if let Some(bad) = self.logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(Error::InvalidInput(format!("logprob {bad} is not finite and <= 0")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    /// Mean negative log-likelihood per scored token.
    pub fn mean_nll(&self) -> f64 {
        -self.logprobs.iter().sum::<f64>() / self.logprobs.len() as f64
    }

    /// Keeps only tokens with at least half of their characters inside `span`.
    pub fn restrict_to_span(&self, span: &Range<usize>) -> Result<ScoredTokens> {
        let offsets = self
            .offsets
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("span scoring needs token offsets".into()))?;
        let mut out = ScoredTokens {
            tokens: Vec::new(),
            logprobs: Vec::new(),
            first_excluded: self.first_excluded,
            offsets: Some(Vec::new()),
        };
        for ((tok, lp), off) in self.tokens.iter().zip(&self.logprobs).zip(offsets) {
            let width = off.end.saturating_sub(off.start);
            let inside = off.end.min(span.end).saturating_sub(off.start.max(span.start));
            if width > 0 && 2 * inside >= width {
                out.tokens.push(tok.clone());
                out.logprobs.push(*lp);
                out.offsets.as_mut().unwrap().push(off.clone());
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidInput(format!(
                "span {}..{} covers no scored token",
                span.start, span.end
            )));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pac,
    Ppl,
    Zlib,
    Lower,
    Ref,
    Neighbor,
    Mink,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Pac,
        Method::Ppl,
        Method::Zlib,
        Method::Lower,
        Method::Ref,
        Method::Neighbor,
        Method::Mink,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pac => "pac",
            Method::Ppl => "ppl",
            Method::Zlib => "zlib",
            Method::Lower => "lower",
            Method::Ref => "ref",
            Method::Neighbor => "neighbor",
            Method::Mink => "mink",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

/// Parameters of the polarized augment calibration detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Percent of highest-probability tokens, in (0, 100].
    pub k1: f64,
    /// Percent of lowest-probability tokens, in (0, 100].
    pub k2: f64,
    /// Swaps per adjacent sample as a fraction of the word count.
    pub m_ratio: f64,
    /// Number of adjacent samples averaged.
    pub n_adjacent: usize,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            k1: 5.0,
            k2: 30.0,
            m_ratio: 0.3,
            n_adjacent: 5,
            epsilon: 0.0,
            seed: 42,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        check_percent("k1", self.k1)?;
        check_percent("k2", self.k2)?;
        if !(0.0..=1.0).contains(&self.m_ratio) {
            return Err(Error::InvalidConfig(format!("m_ratio {} not in [0, 1]", self.m_ratio)));
        }
        if self.n_adjacent == 0 {
            return Err(Error::InvalidConfig("n_adjacent must be positive".into()));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig("epsilon must be finite".into()));
        }
        Ok(())
    }

    /// Swap count for a text of `words` words.
    pub fn swap_count(&self, words: usize) -> usize {
        if self.m_ratio <= 0.0 {
            0
        } else {
            ((self.m_ratio * words as f64).round() as usize).max(1)
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_of(&serde_json::to_value(self).expect("config serializes"))
    }
}

pub(crate) fn check_percent(name: &str, k: f64) -> Result<()> {
    if k > 0.0 && k <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name}={k} not in (0, 100]")))
    }
}

/// Short stable hash of a JSON value (serde_json maps are key-sorted).
pub fn fingerprint_of(value: &serde_json::Value) -> String {
    let digest = Sha256::digest(value.to_string().as_bytes());
    hex::encode(&digest[..8])
}

/// One oriented membership score; higher means more member-like.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub method: Method,
    pub score: f64,
    #[serde(rename = "fingerprint")]
    pub config_fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl ScoreRecord {
    pub fn new(
        sample_id: impl Into<String>,
        method: Method,
        score: f64,
        config_fingerprint: impl Into<String>,
    ) -> Result<Self> {
        if !score.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite {method} score {score}")));
        }
        Ok(ScoreRecord {
            sample_id: sample_id.into(),
            method,
            score,
            config_fingerprint: config_fingerprint.into(),
            warning: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_rejects_empty_text_and_bad_span() {
        assert!(Sample::new("a", "").is_err());
        let s = Sample::new("a", "hello world").unwrap();
        assert!(s.clone().with_span(0..11).is_ok());
        assert!(s.clone().with_span(3..3).is_err());
        assert!(s.with_span(5..12).is_err());
    }

    #[test]
    fn scored_tokens_invariants() {
        assert!(ScoredTokens::from_logprobs(vec![]).is_err());
        assert!(ScoredTokens::from_logprobs(vec![-1.0, 0.5]).is_err());
        assert!(ScoredTokens::from_logprobs(vec![-1.0, f64::NEG_INFINITY]).is_err());
        assert!(ScoredTokens::new(vec!["a".into()], vec![-1.0, -2.0]).is_err());
        let st = ScoredTokens::from_logprobs(vec![-1.0, -3.0]).unwrap();
        assert_eq!(st.mean_nll(), 2.0);
    }

    #[test]
    fn span_restriction_uses_half_overlap() {
        // "aa bbbb cc": tokens at 0..2, 3..7, 8..10
        let st = ScoredTokens::from_logprobs(vec![-1.0, -2.0, -3.0])
            .unwrap()
            .with_offsets(vec![0..2, 3..7, 8..10])
            .unwrap();
        let r = st.restrict_to_span(&(5..10)).unwrap();
        assert_eq!(r.logprobs, vec![-2.0, -3.0]);
        let r = st.restrict_to_span(&(6..10)).unwrap();
        assert_eq!(r.logprobs, vec![-3.0]);
        assert!(st.restrict_to_span(&(2..3)).is_err());
    }

    #[test]
    fn swap_count_rule() {
        let cfg = DetectorConfig::default();
        assert_eq!(cfg.swap_count(10), 3);
        assert_eq!(cfg.swap_count(1), 1);
        let zero = DetectorConfig { m_ratio: 0.0, ..cfg };
        assert_eq!(zero.swap_count(100), 0);
    }

    #[test]
    fn method_parsing() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("loss".parse::<Method>().is_err());
    }

    #[test]
    fn record_json_shape() {
        let r = ScoreRecord::new("s1", Method::Mink, -1.5, "abc").unwrap();
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"id":"s1","method":"mink","score":-1.5,"fingerprint":"abc"}"#);
        assert!(ScoreRecord::new("s1", Method::Pac, f64::NAN, "x").is_err());
    }
}
