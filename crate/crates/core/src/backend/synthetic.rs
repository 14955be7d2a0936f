//! A deterministic memorizing language model.
//!
//! The base distribution is a smoothed bigram model: every row is a Zipf
//! unigram profile perturbed by seeded per-context noise, so word order
//! matters a little but not much. On top of it the model recalls a member
//! corpus: when the full prefix of a query matches a prefix stored in the
//! corpus trie, the next-token distribution becomes
//!
//! ```text
//! p = (1 - lambda) * base(prev) + lambda * recall
//! ```
//!
//! where `recall` is one-hot on the memorized continuation (or spread by
//! document count when several member documents share the prefix).
//!
//! `recall_floor` limits recall to continuations the base model already
//! gives at least that probability. At the default of 0 every memorized
//! position is recalled; a positive floor models a learner that memorizes
//! predictable tokens while surprising ones stay surprising.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{clamp_bias, BiasMap, Capabilities, LogProbProvider, TopNResponse};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::tokenizer::{Token, Tokenizer, Vocab, WordTokenizer};
use crate::types::{ScoredTokens, TokenId};

pub const UNK_TOKEN: &str = "<unk>";

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "we", "ba", "de", "fi", "go", "hu", "ja",
    "ko", "le", "ma", "no",
];

/// Surface form of token `id` in the synthetic vocabulary.
///
/// Id 0 is `<unk>`; others are syllable strings, capitalized when
/// `id % 10 == 7` so lowercasing changes some texts.
pub fn pseudo_word(id: TokenId) -> String {
    if id == 0 {
        return UNK_TOKEN.to_string();
    }
    let mut n = id as usize + SYLLABLES.len();
    let mut parts = Vec::new();
    while n > 0 {
        parts.push(SYLLABLES[n % SYLLABLES.len()]);
        n /= SYLLABLES.len();
    }
    parts.reverse();
    let word: String = parts.concat();
    if id % 10 == 7 {
        let mut c = word.chars();
        let first = c.next().unwrap().to_ascii_uppercase();
        std::iter::once(first).chain(c).collect()
    } else {
        word
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseShape {
    pub zipf_exponent: f64,
    /// Half-width scale of the uniform per-context logit noise, as a
    /// standard deviation.
    pub context_noise: f64,
}

impl Default for BaseShape {
    fn default() -> Self {
        Self { zipf_exponent: 1.0, context_noise: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub vocab_size: usize,
    pub member_corpus: Vec<Vec<TokenId>>,
    pub lambda: f64,
    pub base_seed: u64,
    #[serde(default)]
    pub base: BaseShape,
    #[serde(default)]
    pub recall_floor: f64,
    #[serde(default = "default_topn")]
    pub max_topn: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_topn() -> usize {
    5
}

fn default_parallelism() -> usize {
    4
}

impl SyntheticModelSpec {
    pub fn new(vocab_size: usize, member_corpus: Vec<Vec<TokenId>>, lambda: f64, base_seed: u64) -> Self {
        Self {
            vocab_size,
            member_corpus,
            lambda,
            base_seed,
            base: BaseShape::default(),
            recall_floor: 0.0,
            max_topn: default_topn(),
            parallelism: default_parallelism(),
        }
    }
}

#[derive(Debug, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, usize>,
    docs: u32,
}

pub struct SyntheticModel {
    spec: SyntheticModelSpec,
    /// Row-major base log-probabilities; row `vocab_size` is the start row.
    table: Vec<f64>,
    trie: Vec<TrieNode>,
    tokenizer: WordTokenizer,
    echo: bool,
    name: String,
    queries: AtomicU64,
}

impl std::fmt::Debug for SyntheticModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SyntheticModel")
            .field("vocab_size", &self.spec.vocab_size)
            .field("lambda", &self.spec.lambda)
            .field("members", &self.spec.member_corpus.len())
            .finish()
    }
}

impl SyntheticModel {
    pub fn new(spec: SyntheticModelSpec) -> Result<Self> {
        let v = spec.vocab_size;
        if v < 2 {
            return Err(Error::InvalidConfig("synthetic vocab needs at least 2 tokens".into()));
        }
        if !(0.0..=1.0).contains(&spec.lambda) {
            return Err(Error::InvalidConfig(format!("lambda {} not in [0, 1]", spec.lambda)));
        }
        if !(0.0..1.0).contains(&spec.recall_floor) {
            return Err(Error::InvalidConfig("recall_floor must be in [0, 1)".into()));
        }
        if spec.max_topn == 0 || spec.parallelism == 0 {
            return Err(Error::InvalidConfig("max_topn and parallelism must be positive".into()));
        }
        let mut trie = vec![TrieNode::default()];
        for doc in &spec.member_corpus {
            if doc.is_empty() {
                return Err(Error::InvalidConfig("empty member sequence".into()));
            }
            let mut node = 0;
            trie[0].docs += 1;
            for &tok in doc {
                if tok as usize >= v {
                    return Err(Error::InvalidToken(tok));
                }
                node = match trie[node].children.get(&tok) {
                    Some(&c) => c,
                    None => {
                        trie.push(TrieNode::default());
                        let c = trie.len() - 1;
                        trie[node].children.insert(tok, c);
                        c
                    }
                };
                trie[node].docs += 1;
            }
        }

        let table = build_base_table(&spec);
        let vocab = Vocab::from_tokens((0..v as TokenId).map(pseudo_word));
        let tokenizer = WordTokenizer::new(vocab, Some(UNK_TOKEN))?;
        let name = format!("synthetic-v{}-l{}-s{}", v, spec.lambda, spec.base_seed);
        Ok(Self {
            spec,
            table,
            trie,
            tokenizer,
            echo: true,
            name,
            queries: AtomicU64::new(0),
        })
    }

    /// Hides echo scoring so callers must go through top-n recovery.
    pub fn without_echo(mut self) -> Self {
        self.echo = false;
        self
    }

    pub fn spec(&self) -> &SyntheticModelSpec {
        &self.spec
    }

    pub fn vocab_size(&self) -> usize {
        self.spec.vocab_size
    }

    pub fn vocab(&self) -> &Vocab {
        self.tokenizer.vocab()
    }

    /// Number of top-n queries served so far.
    pub fn topn_queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    fn row(&self, prev: Option<TokenId>) -> &[f64] {
        let v = self.spec.vocab_size;
        let r = prev.map_or(v, |t| t as usize);
        &self.table[r * v..(r + 1) * v]
    }

    /// Base (memorization-free) logprob of `next` after `prev`.
    pub fn base_logprob(&self, prev: Option<TokenId>, next: TokenId) -> f64 {
        self.row(prev)[next as usize]
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.spec.vocab_size) {
            Some(&t) => Err(Error::InvalidToken(t)),
            None => Ok(()),
        }
    }

    fn walk(&self, prefix: &[TokenId]) -> Option<usize> {
        let mut node = 0;
        for t in prefix {
            node = *self.trie[node].children.get(t)?;
        }
        Some(node)
    }

    /// Recall weights at a trie node, restricted by the recall floor.
    fn recall(&self, node: usize, prev: Option<TokenId>) -> Vec<(TokenId, f64)> {
        let row = self.row(prev);
        let floor = self.spec.recall_floor;
        let eligible: Vec<(TokenId, u32)> = self.trie[node]
            .children
            .iter()
            .filter(|(&t, _)| floor <= 0.0 || row[t as usize].exp() >= floor)
            .map(|(&t, &c)| (t, self.trie[c].docs))
            .collect();
        let total: u32 = eligible.iter().map(|e| e.1).sum();
        eligible
            .into_iter()
            .map(|(t, c)| (t, c as f64 / total as f64))
            .collect()
    }

    fn mixed_logprob(&self, node: Option<usize>, prev: Option<TokenId>, next: TokenId) -> f64 {
        let base = self.base_logprob(prev, next);
        let lambda = self.spec.lambda;
        let Some(node) = node else { return base };
        let recall = self.recall(node, prev);
        if recall.is_empty() || lambda == 0.0 {
            return base;
        }
        let w = recall.iter().find(|r| r.0 == next).map_or(0.0, |r| r.1);
        ((1.0 - lambda) * base.exp() + lambda * w).max(1e-300).ln()
    }

    /// Full next-token distribution after `prefix`.
    pub fn next_distribution(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        self.check_tokens(prefix)?;
        let prev = prefix.last().copied();
        let mut p: Vec<f64> = self.row(prev).iter().map(|lp| lp.exp()).collect();
        if let Some(node) = self.walk(prefix) {
            let recall = self.recall(node, prev);
            if !recall.is_empty() {
                let lambda = self.spec.lambda;
                p.iter_mut().for_each(|x| *x *= 1.0 - lambda);
                for (t, w) in recall {
                    p[t as usize] += lambda * w;
                }
            }
        }
        Ok(p)
    }

    /// Exact conditional logprobs of a token sequence; the first token has
    /// no entry.
    pub fn sequence_logprobs_ids(&self, ids: &[TokenId]) -> Result<Vec<f64>> {
        self.check_tokens(ids)?;
        let mut node = Some(0);
        let mut out = Vec::with_capacity(ids.len().saturating_sub(1));
        for (i, &tok) in ids.iter().enumerate() {
            if i > 0 {
                out.push(self.mixed_logprob(node, Some(ids[i - 1]), tok));
            }
            node = node.and_then(|n| self.trie[n].children.get(&tok).copied());
        }
        Ok(out)
    }

    /// Samples `len` tokens from the base distribution, never emitting `<unk>`.
    pub fn sample_base(&self, rng: &mut SplitMix64, len: usize) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(len);
        let mut prev = None;
        for _ in 0..len {
            let row = self.row(prev);
            let total: f64 = row[1..].iter().map(|lp| lp.exp()).sum();
            let mut u = rng.next_f64() * total;
            let mut pick = row.len() - 1;
            for (t, lp) in row.iter().enumerate().skip(1) {
                u -= lp.exp();
                if u <= 0.0 {
                    pick = t;
                    break;
                }
            }
            out.push(pick as TokenId);
            prev = Some(pick as TokenId);
        }
        out
    }

    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter().map(|&t| pseudo_word(t)).collect::<Vec<_>>().join(" ")
    }

    pub fn encode_ids(&self, text: &str) -> Result<Vec<TokenId>> {
        Ok(self.tokenizer.encode(text)?.into_iter().map(|t| t.id).collect())
    }
}

fn build_base_table(spec: &SyntheticModelSpec) -> Vec<f64> {
    let v = spec.vocab_size;
    let s = spec.base.zipf_exponent;
    let unigram: Vec<f64> = (0..v)
        .map(|b| if b == 0 { -s * (v as f64).ln() - 3.0 } else { -s * (b as f64).ln() })
        .collect();
    let amp = spec.base.context_noise * 3f64.sqrt();
    let mut table = Vec::with_capacity((v + 1) * v);
    for r in 0..=v {
        let mut rng = SplitMix64::new(derive_seed(spec.base_seed, r as u64));
        let logits: Vec<f64> = unigram
            .iter()
            .map(|u| u + amp * (2.0 * rng.next_f64() - 1.0))
            .collect();
        let lse = log_sum_exp(&logits);
        table.extend(logits.iter().map(|l| l - lse));
    }
    table
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl LogProbProvider for SyntheticModel {
    fn backend_id(&self) -> &str {
        "synthetic"
    }

    fn model_id(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            full_echo_logprobs: self.echo,
            topn_with_bias: true,
            max_topn: self.spec.max_topn,
            parallelism_budget: self.spec.parallelism,
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        self.tokenizer.encode(text)
    }

    fn echo_logprobs(&self, text: &str) -> Result<ScoredTokens> {
        if !self.echo {
            return Err(Error::backend("echo disabled on this synthetic model"));
        }
        let toks = self.tokenizer.encode(text)?;
        if toks.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "text has {} token(s); at least 2 are needed to score",
                toks.len()
            )));
        }
        let ids: Vec<TokenId> = toks.iter().map(|t| t.id).collect();
        let logprobs = self.sequence_logprobs_ids(&ids)?;
        let rest = &toks[1..];
        ScoredTokens::new(rest.iter().map(|t| t.text.clone()).collect(), logprobs)?
            .with_offsets(rest.iter().map(|t| t.offset.clone()).collect())
    }

    fn topn(&self, prefix: &[TokenId], n: usize, bias: &BiasMap) -> Result<TopNResponse> {
        if n == 0 {
            return Err(Error::InvalidInput("top-n needs n >= 1".into()));
        }
        let keys: Vec<TokenId> = bias.keys().copied().collect();
        self.check_tokens(&keys)?;
        self.queries.fetch_add(1, Ordering::Relaxed);
        let p = self.next_distribution(prefix)?;
        let mut logits: Vec<f64> = p.iter().map(|x| x.max(1e-300).ln()).collect();
        for (&t, &b) in bias {
            logits[t as usize] += clamp_bias(b);
        }
        let lse = log_sum_exp(&logits);
        let mut order: Vec<TokenId> = (0..logits.len() as TokenId).collect();
        order.sort_by(|&a, &b| logits[b as usize].total_cmp(&logits[a as usize]).then(a.cmp(&b)));
        let entries: Vec<(TokenId, f64)> = order
            .into_iter()
            .take(n.min(self.spec.max_topn))
            .map(|t| (t, logits[t as usize] - lse))
            .collect();
        let echo_token = entries[0].0;
        Ok(TopNResponse::new(entries, echo_token))
    }

    fn token_str(&self, id: TokenId) -> Option<String> {
        self.tokenizer.token_str(id).map(str::to_owned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(lambda: f64, corpus: Vec<Vec<TokenId>>) -> SyntheticModel {
        SyntheticModel::new(SyntheticModelSpec::new(50, corpus, lambda, 7)).unwrap()
    }

    #[test]
    fn pseudo_words_unique() {
        let mut words: Vec<String> = (0..2000).map(pseudo_word).collect();
        words.sort();
        words.dedup();
        assert_eq!(words.len(), 2000);
        assert!(pseudo_word(7).chars().next().unwrap().is_uppercase());
    }

    #[test]
    fn lambda_zero_is_base_row() {
        let m = model(0.0, vec![vec![3, 4, 5]]);
        let p = m.next_distribution(&[3]).unwrap();
        for (t, x) in p.iter().enumerate() {
            assert_eq!(*x, m.base_logprob(Some(3), t as TokenId).exp());
        }
    }

    #[test]
    fn lambda_one_is_one_hot_on_memorized_prefix() {
        let m = model(1.0, vec![vec![3, 4, 5]]);
        let p = m.next_distribution(&[3, 4]).unwrap();
        assert_eq!(p[5], 1.0);
        assert_eq!(p.iter().sum::<f64>(), 1.0);
        let lps = m.sequence_logprobs_ids(&[3, 4, 5]).unwrap();
        assert!(lps.iter().all(|lp| lp.abs() < 1e-12));
    }

    #[test]
    fn lambda_half_averages_and_normalizes() {
        let m = model(0.5, vec![vec![3, 4, 5]]);
        let p = m.next_distribution(&[3, 4]).unwrap();
        let base: Vec<f64> = (0..50).map(|t| m.base_logprob(Some(4), t).exp()).collect();
        for t in 0..50 {
            let onehot = if t == 5 { 1.0 } else { 0.0 };
            assert!((p[t] - 0.5 * (base[t] + onehot)).abs() < 1e-15);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn off_corpus_prefix_uses_base() {
        let m = model(0.9, vec![vec![3, 4, 5]]);
        let p = m.next_distribution(&[3, 9]).unwrap();
        assert_eq!(p[5], m.base_logprob(Some(9), 5).exp());
    }

    #[test]
    fn recall_floor_skips_unlikely_continuations() {
        let mut spec = SyntheticModelSpec::new(50, vec![vec![3, 4, 49]], 0.9, 7);
        spec.recall_floor = 0.5;
        let m = SyntheticModel::new(spec).unwrap();
        let lp = m.sequence_logprobs_ids(&[3, 4, 49]).unwrap();
        assert_eq!(lp[1], m.base_logprob(Some(4), 49));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(SyntheticModel::new(SyntheticModelSpec::new(50, vec![vec![]], 0.5, 1)).is_err());
        assert!(SyntheticModel::new(SyntheticModelSpec::new(50, vec![vec![60]], 0.5, 1)).is_err());
        assert!(SyntheticModel::new(SyntheticModelSpec::new(50, vec![], 1.5, 1)).is_err());
    }

    #[test]
    fn topn_exact_and_biased() {
        let m = model(0.0, vec![]);
        let r = m.topn(&[2], 3, &BiasMap::new()).unwrap();
        assert_eq!(r.entries.len(), 3);
        let p = m.next_distribution(&[2]).unwrap();
        for (t, lp) in &r.entries {
            assert!((lp - p[*t as usize].ln()).abs() < 1e-12);
        }
        let worst = (0..50u32).min_by(|&a, &b| p[a as usize].total_cmp(&p[b as usize])).unwrap();
        let biased = m.topn(&[2], 1, &BiasMap::from([(worst, 100.0)])).unwrap();
        assert_eq!(biased.entries[0].0, worst);
        assert!(matches!(m.topn(&[2], 1, &BiasMap::from([(99, 1.0)])), Err(Error::InvalidToken(99))));
    }

    #[test]
    fn echo_drops_first_token() {
        let m = model(0.9, vec![vec![3, 4, 5]]);
        let st = m.echo_logprobs(&m.render(&[3, 4, 5])).unwrap();
        assert!(st.first_excluded);
        assert_eq!(st.len(), 2);
        assert!(st.logprobs.iter().all(|lp| *lp > 0.9f64.ln()));
        assert!(m.echo_logprobs(&m.render(&[3])).is_err());
    }
}
