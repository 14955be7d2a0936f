use std::sync::atomic::{AtomicU64, Ordering};

use super::synthetic::log_sum_exp;
use super::{clamp_bias, BiasMap, Capabilities, LogProbProvider, TopNResponse};
use crate::error::{Error, Result};
use crate::tokenizer::{Token, Tokenizer, Vocab, WordTokenizer};
use crate::types::{ScoredTokens, TokenId};

/// Context-free model with one fixed logit vector; token `i` is named by
/// `names[i]`. Handy for checking exact softmax arithmetic.
pub struct FixedLogitsModel {
    logits: Vec<f64>,
    tokenizer: WordTokenizer,
    max_topn: usize,
    queries: AtomicU64,
}

impl FixedLogitsModel {
    pub fn new(names: &[&str], logits: Vec<f64>, max_topn: usize) -> Result<Self> {
        if names.len() != logits.len() || logits.is_empty() {
            return Err(Error::InvalidConfig("one logit per token name is required".into()));
        }
        let tokenizer = WordTokenizer::new(Vocab::from_tokens(names.iter().copied()), None)?;
        Ok(Self { logits, tokenizer, max_topn, queries: AtomicU64::new(0) })
    }

    pub fn logprob(&self, token: TokenId) -> f64 {
        self.logits[token as usize] - log_sum_exp(&self.logits)
    }

    pub fn topn_queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl LogProbProvider for FixedLogitsModel {
    fn backend_id(&self) -> &str {
        "fixed"
    }

    fn model_id(&self) -> &str {
        "fixed-logits"
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            full_echo_logprobs: true,
            topn_with_bias: true,
            max_topn: self.max_topn,
            parallelism_budget: 1,
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        self.tokenizer.encode(text)
    }

    fn echo_logprobs(&self, text: &str) -> Result<ScoredTokens> {
        let toks = self.tokenizer.encode(text)?;
        let rest = toks.get(1..).unwrap_or_default();
        ScoredTokens::new(
            rest.iter().map(|t| t.text.clone()).collect(),
            rest.iter().map(|t| self.logprob(t.id)).collect(),
        )
    }

    fn topn(&self, _prefix: &[TokenId], n: usize, bias: &BiasMap) -> Result<TopNResponse> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        let mut logits = self.logits.clone();
        for (&t, &b) in bias {
            *logits.get_mut(t as usize).ok_or(Error::InvalidToken(t))? += clamp_bias(b);
        }
        let lse = log_sum_exp(&logits);
        let entries: Vec<(TokenId, f64)> =
            logits.iter().enumerate().map(|(i, l)| (i as TokenId, l - lse)).collect();
        let mut resp = TopNResponse::new(entries, 0);
        resp.entries.truncate(n.min(self.max_topn));
        resp.echo_token = resp.entries[0].0;
        Ok(resp)
    }

    fn token_str(&self, id: TokenId) -> Option<String> {
        self.tokenizer.token_str(id).map(str::to_owned)
    }
}
