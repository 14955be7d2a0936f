//! Word-level perturbations used to build adjacent samples.
//!
//! Perturbations operate on whitespace-separated words of the raw text, never
//! on model tokens; each backend re-tokenizes the perturbed text itself. All
//! randomness comes from [`SplitMix64`], so a `(words, spec)` pair always
//! yields the same output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::types::DetectorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbMode {
    Swap,
    Delete,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub mode: PerturbMode,
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub vocab: Option<Vec<String>>,
}

impl PerturbSpec {
    pub fn swap(m: usize, seed: u64) -> Self {
        Self { mode: PerturbMode::Swap, m, seed, vocab: None }
    }

    pub fn delete(m: usize, seed: u64) -> Self {
        Self { mode: PerturbMode::Delete, m, seed, vocab: None }
    }

    pub fn replace(m: usize, seed: u64, vocab: Vec<String>) -> Self {
        Self { mode: PerturbMode::Replace, m, seed, vocab: Some(vocab) }
    }
}

/// Applies `m` uniformly random transpositions of two distinct positions.
///
/// Each transposition draws `i = below(n)`, then `j = below(n - 1)` shifted
/// past `i`, from a [`SplitMix64`] seeded with `seed`. Positions may be
/// reused across transpositions.
pub fn random_swap<S: Clone>(words: &[S], m: usize, seed: u64) -> Result<Vec<S>> {
    let mut out = words.to_vec();
    if m == 0 {
        return Ok(out);
    }
    if out.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "cannot swap within {} word(s)",
            out.len()
        )));
    }
    let mut rng = SplitMix64::new(seed);
    for _ in 0..m {
        let (i, j) = rng.distinct_pair(out.len());
        out.swap(i, j);
    }
    Ok(out)
}

pub fn perturb(words: &[String], spec: &PerturbSpec) -> Result<Vec<String>> {
    match spec.mode {
        PerturbMode::Swap => random_swap(words, spec.m, spec.seed),
        PerturbMode::Delete => {
            let mut out = words.to_vec();
            if spec.m == 0 {
                return Ok(out);
            }
            if out.len() < 2 {
                return Err(Error::DegenerateInput(format!(
                    "cannot delete from {} word(s)",
                    out.len()
                )));
            }
            let mut rng = SplitMix64::new(spec.seed);
            let deletions = spec.m.min(out.len() - 1);
            for _ in 0..deletions {
                let at = rng.below(out.len());
                out.remove(at);
            }
            Ok(out)
        }
        PerturbMode::Replace => {
            let vocab = spec
                .vocab
                .as_ref()
                .filter(|v| !v.is_empty())
                .ok_or_else(|| Error::InvalidConfig("replace mode needs a non-empty vocab".into()))?;
            let mut out = words.to_vec();
            if spec.m == 0 {
                return Ok(out);
            }
            if out.is_empty() {
                return Err(Error::DegenerateInput("cannot replace in an empty text".into()));
            }
            let mut rng = SplitMix64::new(spec.seed);
            for _ in 0..spec.m {
                let at = rng.below(out.len());
                out[at] = vocab[rng.below(vocab.len())].clone();
            }
            Ok(out)
        }
    }
}

pub fn split_words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Collapses all whitespace runs to single spaces.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds `cfg.n_adjacent` swapped copies of `text`.
///
/// Adjacent `i` uses the stream `derive_seed(cfg.seed, i)`.
pub fn generate_adjacents(text: &str, cfg: &DetectorConfig) -> Result<Vec<String>> {
    let words = split_words(text);
    let m = cfg.swap_count(words.len());
    (0..cfg.n_adjacent as u64)
        .map(|i| random_swap(&words, m, derive_seed(cfg.seed, i)).map(|w| w.join(" ")))
        .collect()
}
