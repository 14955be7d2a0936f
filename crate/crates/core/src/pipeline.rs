//! Method dispatch: one sample plus backends in, one [`ScoreRecord`] out.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::augment::{perturb, split_words, PerturbSpec};
use crate::backend::{parallel_map, score_texts, sequence_logprobs, LogProbProvider};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scoring::{
    lower_score, mink_score, neighbor_score, pac_score, pac_score_span, ppl_score, ref_score, split_chars,
    zlib_score,
};
use crate::types::{fingerprint_of, DetectorConfig, Method, Sample, ScoreRecord, ScoredTokens};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    /// Percent for min-k.
    pub mink_k: f64,
    /// Generated neighbours per sample when none are supplied.
    pub neighbor_count: usize,
    /// Fraction of words replaced in each generated neighbour.
    pub neighbor_ratio: f64,
    /// Score only each sample's span.
    pub span_only: bool,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self { mink_k: 20.0, neighbor_count: 5, neighbor_ratio: 0.3, span_only: false }
    }
}

pub struct Scorer<'a> {
    pub target: &'a dyn LogProbProvider,
    pub reference: Option<&'a dyn LogProbProvider>,
    pub detector: DetectorConfig,
    pub params: MethodParams,
    /// Caller-supplied neighbour texts by sample id.
    pub neighbors: HashMap<String, Vec<String>>,
    /// Replacement words for generated neighbours.
    pub neighbor_vocab: Vec<String>,
}

impl<'a> Scorer<'a> {
    pub fn new(target: &'a dyn LogProbProvider, detector: DetectorConfig) -> Self {
        Self {
            target,
            reference: None,
            detector,
            params: MethodParams::default(),
            neighbors: HashMap::new(),
            neighbor_vocab: Vec::new(),
        }
    }

    pub fn with_reference(mut self, reference: &'a dyn LogProbProvider) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_params(mut self, params: MethodParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_neighbor_vocab(mut self, vocab: Vec<String>) -> Self {
        self.neighbor_vocab = vocab;
        self
    }

    pub fn fingerprint(&self, method: Method) -> String {
        let mut v = json!({ "method": method, "span_only": self.params.span_only });
        match method {
            Method::Pac => v["detector"] = serde_json::to_value(&self.detector).unwrap(),
            Method::Mink => v["k"] = json!(self.params.mink_k),
            Method::Neighbor => {
                v["count"] = json!(self.params.neighbor_count);
                v["ratio"] = json!(self.params.neighbor_ratio);
                v["seed"] = json!(self.detector.seed);
            }
            Method::Ref => {
                v["reference"] = json!(self.reference.map(|r| format!("{}/{}", r.backend_id(), r.model_id())));
            }
            _ => {}
        }
        fingerprint_of(&v)
    }

    fn span_of(&self, sample: &Sample) -> Result<Option<std::ops::Range<usize>>> {
        if !self.params.span_only {
            return Ok(None);
        }
        sample
            .span
            .clone()
            .map(Some)
            .ok_or_else(|| Error::InvalidInput(format!("sample {} has no span", sample.id)))
    }

    fn scored(&self, p: &dyn LogProbProvider, sample: &Sample, text: &str) -> Result<ScoredTokens> {
        let st = sequence_logprobs(p, text).map_err(|e| e.with_sample(&sample.id))?;
        match self.span_of(sample)? {
            Some(span) => st.restrict_to_span(&span),
            None => Ok(st),
        }
    }

    fn neighbor_texts(&self, sample: &Sample) -> Result<Vec<String>> {
        if let Some(given) = self.neighbors.get(&sample.id) {
            return Ok(given.clone());
        }
        if self.neighbor_vocab.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "no neighbours supplied for sample {} and no replacement vocabulary",
                sample.id
            )));
        }
        let (prefix, body, suffix) = match self.span_of(sample)? {
            Some(span) => split_chars(&sample.text, &span),
            None => (String::new(), sample.text.clone(), String::new()),
        };
        let words = split_words(&body);
        let m = ((self.params.neighbor_ratio * words.len() as f64).round() as usize).max(1);
        (0..self.params.neighbor_count as u64)
            .map(|i| {
                let spec = PerturbSpec::replace(m, derive_seed(self.detector.seed ^ 0x6e62, i), self.neighbor_vocab.clone());
                Ok(format!("{prefix}{}{suffix}", perturb(&words, &spec)?.join(" ")))
            })
            .collect()
    }

    pub fn score(&self, method: Method, sample: &Sample) -> Result<ScoreRecord> {
        sample.validate()?;
        let fp = self.fingerprint(method);
        let span_text = match self.span_of(sample)? {
            Some(span) => split_chars(&sample.text, &span).1,
            None => sample.text.clone(),
        };
        let score = match method {
            Method::Pac => {
                let mut rec = if self.params.span_only {
                    pac_score_span(sample, self.target, &self.detector)?
                } else {
                    pac_score(sample, self.target, &self.detector)?
                };
                rec.config_fingerprint = fp;
                return Ok(rec);
            }
            Method::Ppl => ppl_score(&self.scored(self.target, sample, &sample.text)?),
            Method::Mink => mink_score(&self.scored(self.target, sample, &sample.text)?, self.params.mink_k)?,
            Method::Zlib => zlib_score(&span_text, &self.scored(self.target, sample, &sample.text)?)?,
            Method::Lower => {
                let orig = self.scored(self.target, sample, &sample.text)?;
                let lower = self.scored(self.target, sample, &sample.text.to_lowercase())?;
                lower_score(&orig, &lower)
            }
            Method::Ref => {
                let reference = self
                    .reference
                    .ok_or_else(|| Error::InvalidConfig("ref method needs a reference backend".into()))?;
                let target = self.scored(self.target, sample, &sample.text)?;
                ref_score(&target, &self.scored(reference, sample, &sample.text)?)
            }
            Method::Neighbor => {
                let own = self.scored(self.target, sample, &sample.text)?.mean_nll();
                let texts = self.neighbor_texts(sample)?;
                let nlls = score_texts(self.target, &texts)
                    .into_iter()
                    .map(|r| r.map(|st| st.mean_nll()).map_err(|e| e.with_sample(&sample.id)))
                    .collect::<Result<Vec<_>>>()?;
                neighbor_score(own, &nlls)?
            }
        };
        ScoreRecord::new(&sample.id, method, score, fp)
    }

    /// Scores every sample, in input order.
    pub fn score_all(&self, method: Method, samples: &[Sample]) -> Vec<Result<ScoreRecord>> {
        parallel_map(self.target.capabilities().parallelism_budget, samples.len(), |i| {
            self.score(method, &samples[i])
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{pseudo_word, SyntheticModel, SyntheticModelSpec};

    fn setup() -> (SyntheticModel, SyntheticModel, Sample) {
        let doc: Vec<u32> = (1..=12).collect();
        let target = SyntheticModel::new(SyntheticModelSpec::new(40, vec![doc.clone()], 0.9, 3)).unwrap();
        let reference = SyntheticModel::new(SyntheticModelSpec::new(40, vec![], 0.0, 3)).unwrap();
        let sample = Sample::new("m", target.render(&doc)).unwrap();
        (target, reference, sample)
    }

    #[test]
    fn every_method_scores() {
        let (t, r, s) = setup();
        let vocab: Vec<String> = (1..40).map(pseudo_word).collect();
        let scorer = Scorer::new(&t, DetectorConfig::default()).with_reference(&r).with_neighbor_vocab(vocab);
        for m in Method::ALL {
            let rec = scorer.score(m, &s).unwrap();
            assert_eq!(rec.method, m);
            assert!(rec.score.is_finite());
            assert_eq!(rec, scorer.score(m, &s).unwrap());
        }
        assert!(scorer.score(Method::Ref, &s).unwrap().score > 0.0);
        assert_ne!(scorer.fingerprint(Method::Mink), scorer.fingerprint(Method::Ppl));
    }

    #[test]
    fn missing_inputs_are_config_errors() {
        let (t, _, s) = setup();
        let scorer = Scorer::new(&t, DetectorConfig::default());
        assert!(matches!(scorer.score(Method::Ref, &s), Err(Error::InvalidConfig(_))));
        assert!(matches!(scorer.score(Method::Neighbor, &s), Err(Error::InvalidConfig(_))));
        let span_scorer = Scorer::new(&t, DetectorConfig::default())
            .with_params(MethodParams { span_only: true, ..Default::default() });
        assert!(matches!(span_scorer.score(Method::Ppl, &s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn span_mode_scores_only_the_span() {
        let (t, _, s) = setup();
        let words: Vec<&str> = s.text.split(' ').collect();
        let start: usize = words[..6].iter().map(|w| w.chars().count() + 1).sum();
        let s = s.clone().with_span(start..s.text.chars().count()).unwrap();
        let whole = Scorer::new(&t, DetectorConfig::default());
        let span = Scorer::new(&t, DetectorConfig::default())
            .with_params(MethodParams { span_only: true, ..Default::default() });
        let full = sequence_logprobs(&t, &s.text).unwrap();
        let tail = &full.logprobs[5..];
        let want = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((span.score(Method::Ppl, &s).unwrap().score - want).abs() < 1e-12);
        assert_ne!(whole.score(Method::Ppl, &s).unwrap().score, want);
        assert!(span.score(Method::Pac, &s).unwrap().score.is_finite());
    }

    #[test]
    fn given_neighbours_take_precedence() {
        let (t, _, s) = setup();
        let mut scorer = Scorer::new(&t, DetectorConfig::default());
        scorer.neighbors.insert("m".into(), vec![s.text.clone()]);
        assert_eq!(scorer.score(Method::Neighbor, &s).unwrap().score, 0.0);
    }
}
