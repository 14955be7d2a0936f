//! Exact per-token logprobs from top-n-only APIs.
//!
//! For a target token outside the unbiased top-n, fix the unbiased rank-1
//! token `ref` with its reported logprob. Adding bias `g` to the target's
//! logit moves `logprob(target) - logprob(ref)` by exactly `g` within one
//! response, because both share the same partition function. Binary search
//! finds the smallest `g` at which the target ranks at or above `ref`; then
//! `logprob(target) = logprob(ref) - g`.
//!
//! The single-token shortcut (read the biased logprob and subtract the
//! bias) is not used: its error grows with the bias because the partition
//! function changes.

use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::backend::{parallel_map, BiasMap, LogProbProvider, TopNResponse};
use crate::error::{Error, Result};
use crate::types::{ScoredTokens, TokenId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub bias_lo: f64,
    pub bias_hi: f64,
    /// Bias resolution at which the search stops.
    pub tol: f64,
    pub topn: usize,
    pub max_queries_per_token: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            bias_lo: -100.0,
            bias_hi: 100.0,
            tol: 0.01,
            topn: 5,
            max_queries_per_token: 64,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bias_lo < self.bias_hi) {
            return Err(Error::InvalidConfig("bias_lo must be below bias_hi".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        if self.topn == 0 {
            return Err(Error::InvalidConfig("topn must be positive".into()));
        }
        Ok(())
    }

    /// Worst-case bias queries for one searched token.
    pub fn max_bias_queries(&self) -> usize {
        1 + ((self.bias_hi - self.bias_lo) / self.tol).log2().ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRecovery {
    pub logprob: f64,
    /// Biased probes issued; 0 on the fast path.
    pub bias_queries: usize,
    /// All probes including the unbiased one.
    pub queries: usize,
    /// Converged bias, absent on the fast path.
    pub gamma: Option<f64>,
    pub tol: f64,
}

/// A target at or above `reference` in the same response counts as flipped.
fn flipped(resp: &TopNResponse, target: TokenId, reference: TokenId) -> bool {
    match (resp.logprob_of(target), resp.logprob_of(reference)) {
        (Some(t), Some(r)) => t >= r,
        (Some(_), None) => true,
        _ => false,
    }
}

pub fn recover_token_logprob(
    provider: &dyn LogProbProvider,
    prefix: &[TokenId],
    target: TokenId,
    cfg: &TrackerConfig,
) -> Result<TokenRecovery> {
    cfg.validate()?;
    let n = cfg.topn;
    let base = provider.topn(prefix, n, &BiasMap::new())?;
    if let Some(lp) = base.logprob_of(target) {
        return Ok(TokenRecovery { logprob: lp, bias_queries: 0, queries: 1, gamma: None, tol: cfg.tol });
    }
    let (reference, ref_lp) = base
        .top()
        .ok_or_else(|| Error::backend("empty top-n response"))?;

    let mut bias_queries = 0;
    let mut probe = |g: f64| -> Result<bool> {
        if bias_queries >= cfg.max_queries_per_token {
            return Err(Error::Budget { target, limit: cfg.max_queries_per_token });
        }
        bias_queries += 1;
        let resp = provider.topn(prefix, n, &BiasMap::from([(target, g)]))?;
        Ok(flipped(&resp, target, reference))
    };

    if !probe(cfg.bias_hi)? {
        return Err(Error::Unreachable { target, topn: n, bias_hi: cfg.bias_hi });
    }
    // The unbiased probe already showed no flip at zero bias.
    let mut lo = cfg.bias_lo.max(0.0).min(cfg.bias_hi);
    let mut hi = cfg.bias_hi;
    while hi - lo > cfg.tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    Ok(TokenRecovery {
        logprob: ref_lp - gamma,
        bias_queries,
        queries: bias_queries + 1,
        gamma: Some(gamma),
        tol: cfg.tol,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub total: usize,
    pub biased: usize,
    pub searched_tokens: usize,
}

/// Per-position recovery of a whole text; `None` marks a hole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecovery {
    pub tokens: Vec<String>,
    pub logprobs: Vec<Option<f64>>,
    pub offsets: Vec<std::ops::Range<usize>>,
    /// `(position, reason)` for every hole.
    pub holes: Vec<(usize, String)>,
    pub queries: QueryStats,
    pub tol: f64,
}

impl SequenceRecovery {
    pub fn is_complete(&self) -> bool {
        self.holes.is_empty()
    }

    /// Complete scorings only; any hole drops the sample.
    pub fn into_scored(self) -> Result<ScoredTokens> {
        if let Some((pos, why)) = self.holes.first() {
            return Err(Error::backend(format!(
                "{} unrecoverable position(s), first at {pos}: {why}",
                self.holes.len()
            )));
        }
        let lps = self.logprobs.into_iter().map(|lp| lp.unwrap()).collect();
        ScoredTokens::new(self.tokens, lps)?.with_offsets(self.offsets)
    }
}

/// Recovers logprobs for every position after the first.
///
/// Positions run concurrently up to the provider's parallelism budget.
/// Transport failures abort the whole text; unreachable tokens and budget
/// overruns become holes.
pub fn recover_sequence_logprobs(
    provider: &dyn LogProbProvider,
    text: &str,
    cfg: &TrackerConfig,
) -> Result<SequenceRecovery> {
    cfg.validate()?;
    let toks = provider.tokenize(text)?;
    if toks.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "text has {} token(s); at least 2 are needed to score",
            toks.len()
        )));
    }
    let ids: Vec<TokenId> = toks.iter().map(|t| t.id).collect();
    let total = AtomicUsize::new(0);
    let biased = AtomicUsize::new(0);
    let searched = AtomicUsize::new(0);
    let results = parallel_map(provider.capabilities().parallelism_budget, ids.len() - 1, |i| {
        let pos = i + 1;
        let out = recover_token_logprob(provider, &ids[..pos], ids[pos], cfg);
        if let Ok(r) = &out {
            total.fetch_add(r.queries, Ordering::Relaxed);
            biased.fetch_add(r.bias_queries, Ordering::Relaxed);
            if r.gamma.is_some() {
                searched.fetch_add(1, Ordering::Relaxed);
            }
        }
        out
    });

    let mut logprobs = Vec::with_capacity(results.len());
    let mut holes = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => logprobs.push(Some(rec.logprob)),
            Err(e @ (Error::Unreachable { .. } | Error::Budget { .. })) => {
                logprobs.push(None);
                holes.push((i + 1, e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SequenceRecovery {
        tokens: toks[1..].iter().map(|t| t.text.clone()).collect(),
        logprobs,
        offsets: toks[1..].iter().map(|t| t.offset.clone()).collect(),
        holes,
        queries: QueryStats {
            total: total.into_inner(),
            biased: biased.into_inner(),
            searched_tokens: searched.into_inner(),
        },
        tol: cfg.tol,
    })
}
