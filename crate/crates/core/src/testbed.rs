//! Offline membership benchmark on the synthetic memorizing model.
//!
//! Members and non-members are both sampled from the same base
//! distribution with matched lengths; the members are then handed to the
//! target model as its memorized corpus. The reference model shares the
//! base distribution but memorizes nothing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backend::{pseudo_word, BaseShape, SyntheticModel, SyntheticModelSpec};
use crate::error::{Error, Result};
use crate::eval::{auc, LabeledScores};
use crate::pipeline::{MethodParams, Scorer};
use crate::rng::{derive_seed, SplitMix64};
use crate::types::{DetectorConfig, Label, Method, Sample, ScoreRecord, TokenId};

/// Word-count ranges cycled through by sample index, one per length bucket.
pub const LENGTH_RANGES: [(usize, usize); 4] = [(32, 64), (64, 128), (128, 256), (256, 320)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    pub vocab_size: usize,
    pub lambda: f64,
    pub seed: u64,
    pub members: usize,
    pub nonmembers: usize,
    pub recall_floor: f64,
    pub base: BaseShape,
}

impl Default for TestbedConfig {
    fn default() -> Self {
        Self {
            vocab_size: 1000,
            lambda: 0.9,
            seed: 42,
            members: 200,
            nonmembers: 200,
            recall_floor: 0.01,
            base: BaseShape::default(),
        }
    }
}

pub struct Testbed {
    pub config: TestbedConfig,
    pub target: SyntheticModel,
    pub reference: SyntheticModel,
    pub samples: Vec<Sample>,
}

fn draw_docs(model: &SyntheticModel, n: usize, seed: u64) -> Vec<Vec<TokenId>> {
    let mut rng = SplitMix64::new(seed);
    (0..n)
        .map(|i| {
            let (lo, hi) = LENGTH_RANGES[i % LENGTH_RANGES.len()];
            let len = lo + rng.below(hi - lo);
            model.sample_base(&mut rng, len)
        })
        .collect()
}

impl Testbed {
    pub fn build(config: TestbedConfig) -> Result<Self> {
        if config.members == 0 || config.nonmembers == 0 {
            return Err(Error::InvalidConfig("testbed needs members and non-members".into()));
        }
        let spec = |corpus: Vec<Vec<TokenId>>, lambda: f64| SyntheticModelSpec {
            base: config.base,
            recall_floor: config.recall_floor,
            ..SyntheticModelSpec::new(config.vocab_size, corpus, lambda, config.seed)
        };
        let reference = SyntheticModel::new(spec(vec![], 0.0))?;
        let members = draw_docs(&reference, config.members, derive_seed(config.seed, 1));
        let nonmembers = draw_docs(&reference, config.nonmembers, derive_seed(config.seed, 2));
        let target = SyntheticModel::new(spec(members.clone(), config.lambda))?;

        let mut samples = Vec::with_capacity(members.len() + nonmembers.len());
        for (prefix, docs, label) in [("m", &members, Label::Member), ("n", &nonmembers, Label::Nonmember)] {
            for (i, doc) in docs.iter().enumerate() {
                samples.push(Sample::new(format!("{prefix}{i:04}"), target.render(doc))?.with_label(label));
            }
        }
        Ok(Self { config, target, reference, samples })
    }

    /// Replacement words for generated neighbours: the whole vocabulary
    /// except `<unk>`.
    pub fn neighbor_vocab(&self) -> Vec<String> {
        (1..self.config.vocab_size as TokenId).map(pseudo_word).collect()
    }

    pub fn scorer(&self, detector: DetectorConfig, params: MethodParams) -> Scorer<'_> {
        Scorer::new(&self.target, detector)
            .with_reference(&self.reference)
            .with_params(params)
            .with_neighbor_vocab(self.neighbor_vocab())
    }

    pub fn run(&self, detector: &DetectorConfig, methods: &[Method]) -> Result<TestbedRun> {
        let scorer = self.scorer(detector.clone(), MethodParams::default());
        let mut scores = BTreeMap::new();
        let mut aucs = BTreeMap::new();
        for &m in methods {
            let recs = scorer.score_all(m, &self.samples).into_iter().collect::<Result<Vec<_>>>()?;
            aucs.insert(m, auc(&labeled(&self.samples, &recs))?);
            scores.insert(m, recs);
        }
        Ok(TestbedRun { scores, auc: aucs })
    }
}

/// Pairs records with sample labels by position.
pub fn labeled(samples: &[Sample], records: &[ScoreRecord]) -> LabeledScores {
    LabeledScores::from_pairs(
        samples
            .iter()
            .zip(records)
            .filter_map(|(s, r)| s.label.map(|l| (l, r.score))),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedRun {
    pub scores: BTreeMap<Method, Vec<ScoreRecord>>,
    pub auc: BTreeMap<Method, f64>,
}

impl TestbedRun {
    pub fn mean_by_label(&self, samples: &[Sample], method: Method) -> Option<(f64, f64)> {
        let ls = labeled(samples, self.scores.get(&method)?);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Some((mean(&ls.members), mean(&ls.nonmembers)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> TestbedConfig {
        TestbedConfig { vocab_size: 200, members: 12, nonmembers: 12, ..Default::default() }
    }

    #[test]
    fn build_is_deterministic_and_balanced() {
        let a = Testbed::build(small()).unwrap();
        let b = Testbed::build(small()).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.len(), 24);
        for (i, s) in a.samples.iter().enumerate() {
            let (lo, hi) = LENGTH_RANGES[(i % 12) % 4];
            assert!((lo..hi).contains(&s.word_count()), "{} has {} words", s.id, s.word_count());
        }
        assert!(!a.samples.iter().any(|s| s.text.contains("<unk>")));
    }

    #[test]
    fn small_run_orders_pac() {
        let tb = Testbed::build(small()).unwrap();
        let run = tb.run(&DetectorConfig::default(), &[Method::Pac, Method::Ppl]).unwrap();
        let (m, n) = run.mean_by_label(&tb.samples, Method::Pac).unwrap();
        assert!(m > n, "member mean {m} <= non-member mean {n}");
        assert!(run.auc[&Method::Pac] > 0.5);
    }
}
