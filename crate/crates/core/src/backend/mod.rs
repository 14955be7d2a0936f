//! Uniform access to per-token log-probabilities.
//!
//! Three providers ship with the crate: [`HttpProvider`] for
//! OpenAI-compatible completion endpoints, [`ReplayProvider`] for recorded
//! scorings, and [`SyntheticModel`], a deterministic memorizing language
//! model for desk-scale experiments.

mod cache;
mod fixed;
mod http;
mod replay;
mod serve;
mod synthetic;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::Token;
use crate::tracker::{recover_sequence_logprobs, TrackerConfig};
use crate::types::{ScoredTokens, TokenId};

pub use cache::CachingProvider;
pub use fixed::FixedLogitsModel;
pub use http::{
    HttpConfig, HttpProvider, TransportError, Transport, UreqTransport, API_KEY_ENV,
};
pub use replay::{text_hash, ReplayProvider, ReplayRecord, ReplayWriter};
pub use serve::LoopbackServer;
pub use synthetic::{pseudo_word, BaseShape, SyntheticModel, SyntheticModelSpec, UNK_TOKEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub full_echo_logprobs: bool,
    pub topn_with_bias: bool,
    pub max_topn: usize,
    pub parallelism_budget: usize,
}

/// Top-n next-token answer, sorted by descending logprob with ties broken
/// by ascending token id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNResponse {
    pub entries: Vec<(TokenId, f64)>,
    pub echo_token: TokenId,
}

impl TopNResponse {
    pub fn new(mut entries: Vec<(TokenId, f64)>, echo_token: TokenId) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.dedup_by_key(|e| e.0);
        TopNResponse { entries, echo_token }
    }

    pub fn logprob_of(&self, token: TokenId) -> Option<f64> {
        self.entries.iter().find(|e| e.0 == token).map(|e| e.1)
    }

    pub fn top(&self) -> Option<(TokenId, f64)> {
        self.entries.first().copied()
    }
}

pub type BiasMap = BTreeMap<TokenId, f64>;

pub const BIAS_LIMIT: f64 = 100.0;

pub fn clamp_bias(b: f64) -> f64 {
    b.clamp(-BIAS_LIMIT, BIAS_LIMIT)
}

pub trait LogProbProvider: Send + Sync {
    /// Backend and model identity, used for cache keys and manifests.
    fn backend_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn capabilities(&self) -> Capabilities;

    fn tokenize(&self, text: &str) -> Result<Vec<Token>>;

    /// Per-token logprobs of `text` itself, first token dropped.
    fn echo_logprobs(&self, _text: &str) -> Result<ScoredTokens> {
        Err(Error::backend(format!("{} does not support echo logprobs", self.backend_id())))
    }

    fn topn(&self, _prefix: &[TokenId], _n: usize, _bias: &BiasMap) -> Result<TopNResponse> {
        Err(Error::backend(format!("{} does not support top-n queries", self.backend_id())))
    }

    fn token_str(&self, id: TokenId) -> Option<String>;
}

macro_rules! forward_provider {
    ($($ty:ty),*) => {$(
        impl<P: LogProbProvider + ?Sized> LogProbProvider for $ty {
            fn backend_id(&self) -> &str {
                (**self).backend_id()
            }
            fn model_id(&self) -> &str {
                (**self).model_id()
            }
            fn capabilities(&self) -> Capabilities {
                (**self).capabilities()
            }
            fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
                (**self).tokenize(text)
            }
            fn echo_logprobs(&self, text: &str) -> Result<ScoredTokens> {
                (**self).echo_logprobs(text)
            }
            fn topn(&self, prefix: &[TokenId], n: usize, bias: &BiasMap) -> Result<TopNResponse> {
                (**self).topn(prefix, n, bias)
            }
            fn token_str(&self, id: TokenId) -> Option<String> {
                (**self).token_str(id)
            }
        }
    )*};
}

forward_provider!(&P, Box<P>, std::sync::Arc<P>);

/// Conditional logprobs of `text`, via echo when available and otherwise
/// through bias-driven recovery.
pub fn sequence_logprobs(provider: &dyn LogProbProvider, text: &str) -> Result<ScoredTokens> {
    let caps = provider.capabilities();
    if caps.full_echo_logprobs {
        provider.echo_logprobs(text)
    } else if caps.topn_with_bias {
        let cfg = TrackerConfig {
            topn: caps.max_topn.min(TrackerConfig::default().topn),
            ..TrackerConfig::default()
        };
        recover_sequence_logprobs(provider, text, &cfg)?.into_scored()
    } else {
        Err(Error::backend(format!(
            "{} exposes neither echo nor top-n logprobs",
            provider.backend_id()
        )))
    }
}

/// Scores many texts, running at most `parallelism_budget` at once.
/// Results keep input order.
pub fn score_texts(provider: &dyn LogProbProvider, texts: &[String]) -> Vec<Result<ScoredTokens>> {
    parallel_map(provider.capabilities().parallelism_budget, texts.len(), |i| {
        sequence_logprobs(provider, &texts[i])
    })
}

/// Runs `f(0..n)` on up to `workers` scoped threads, preserving order.
pub(crate) fn parallel_map<T, F>(workers: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(n);
    if workers <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topn_response_sorted_and_deduped() {
        let r = TopNResponse::new(vec![(3, -1.0), (1, -0.5), (2, -1.0), (3, -1.0)], 1);
        assert_eq!(r.entries, vec![(1, -0.5), (2, -1.0), (3, -1.0)]);
        assert_eq!(r.logprob_of(2), Some(-1.0));
        assert_eq!(r.top(), Some((1, -0.5)));
    }

    #[test]
    fn parallel_map_keeps_order() {
        let out = parallel_map(4, 100, |i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        assert!(parallel_map(3, 0, |i| i).is_empty());
    }

    #[test]
    fn bias_clamped() {
        assert_eq!(clamp_bias(250.0), 100.0);
        assert_eq!(clamp_bias(-250.0), -100.0);
        assert_eq!(clamp_bias(3.5), 3.5);
    }
}
