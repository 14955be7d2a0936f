//! Membership scores.
//!
//! Every score here is oriented so that a higher value means "more likely a
//! training member"; loss-like quantities are negated on the way out. This
//! lets evaluation and thresholding share one code path.

use std::io::Write;
use std::ops::Range;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::augment::{generate_adjacents, normalize_whitespace};
use crate::backend::{score_texts, LogProbProvider};
use crate::error::{Error, Result};
use crate::types::{check_percent, DetectorConfig, Label, Method, Sample, ScoreRecord, ScoredTokens};

/// Set size for a percentage of `len` items: round half up, at least one.
fn polar_set_size(k: f64, len: usize) -> usize {
    let raw = (k * len as f64 / 100.0 + 0.5).floor() as usize;
    raw.clamp(1, len)
}

/// Indices ordered by ascending logprob; ties keep the earlier index first.
fn ascending_order(logprobs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logprobs.len()).collect();
    idx.sort_by(|&a, &b| logprobs[a].total_cmp(&logprobs[b]));
    idx
}

fn descending_order(logprobs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..logprobs.len()).collect();
    idx.sort_by(|&a, &b| logprobs[b].total_cmp(&logprobs[a]));
    idx
}

/// Mean of the selected values, shifted by `origin` and summed in token
/// order so equal values and identical sets give exact results.
fn mean_of(logprobs: &[f64], idx: &[usize], origin: f64) -> f64 {
    let mut idx = idx.to_vec();
    idx.sort_unstable();
    origin + idx.iter().map(|&i| logprobs[i] - origin).sum::<f64>() / idx.len() as f64
}

/// Mean logprob of the top `k1`% tokens minus mean of the bottom `k2`%.
///
/// Set sizes are `max(1, round(k * L / 100))`. Both sets are chosen
/// independently, so they may overlap on very short inputs.
pub fn polarized_distance(st: &ScoredTokens, k1: f64, k2: f64) -> Result<f64> {
    check_percent("k1", k1)?;
    check_percent("k2", k2)?;
    let lp = &st.logprobs;
    if lp.is_empty() {
        return Err(Error::InvalidInput("polarized distance of an empty token list".into()));
    }
    let top = descending_order(lp);
    let bottom = ascending_order(lp);
    let origin = lp[bottom[0]];
    let high = mean_of(lp, &top[..polar_set_size(k1, lp.len())], origin);
    let low = mean_of(lp, &bottom[..polar_set_size(k2, lp.len())], origin);
    // The two means come from the same values, so any negative is rounding.
    Ok((high - low).max(0.0))
}

/// Mean token logprob, i.e. negative log-perplexity.
pub fn ppl_score(st: &ScoredTokens) -> f64 {
    -st.mean_nll()
}

/// Mean of the lowest `ceil(k * L / 100)` logprobs.
pub fn mink_score(st: &ScoredTokens, k: f64) -> Result<f64> {
    check_percent("k", k)?;
    let lp = &st.logprobs;
    if lp.is_empty() {
        return Err(Error::InvalidInput("min-k of an empty token list".into()));
    }
    let size = ((k * lp.len() as f64 / 100.0).ceil() as usize).clamp(1, lp.len());
    let order = ascending_order(lp);
    Ok(mean_of(lp, &order[..size], lp[order[0]]))
}

/// Length of `text` after zlib (RFC 1950) compression at level 6.
pub fn zlib_size(text: &str) -> Result<usize> {
    if text.is_empty() {
        return Err(Error::InvalidInput("zlib size of empty text".into()));
    }
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(6));
    enc.write_all(text.as_bytes())?;
    Ok(enc.finish()?.len())
}

/// Negated mean NLL per compressed byte.
pub fn zlib_score(text: &str, st: &ScoredTokens) -> Result<f64> {
    let c = zlib_size(text)?;
    Ok(-(st.mean_nll() / c as f64))
}

pub fn lower_score(st_orig: &ScoredTokens, st_lower: &ScoredTokens) -> f64 {
    st_lower.mean_nll() - st_orig.mean_nll()
}

pub fn ref_score(st_target: &ScoredTokens, st_reference: &ScoredTokens) -> f64 {
    st_reference.mean_nll() - st_target.mean_nll()
}

/// Neighbourhood comparison, negated to the member-high convention.
///
/// Divides by the population standard deviation of the neighbour losses,
/// falling back to the raw difference when that is below `1e-12`.
pub fn neighbor_score(sample_nll: f64, neighbor_nlls: &[f64]) -> Result<f64> {
    if neighbor_nlls.is_empty() {
        return Err(Error::InvalidInput("neighbour score needs at least one neighbour".into()));
    }
    let n = neighbor_nlls.len() as f64;
    let mean = neighbor_nlls.iter().sum::<f64>() / n;
    let var = neighbor_nlls.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let diff = mean - sample_nll;
    Ok(if sigma < 1e-12 { diff } else { diff / sigma })
}

pub fn decide(record: &ScoreRecord, epsilon: f64) -> Label {
    decide_score(record.score, epsilon)
}

pub fn decide_score(score: f64, epsilon: f64) -> Label {
    if score > epsilon {
        Label::Member
    } else {
        Label::Nonmember
    }
}

/// PAC score from an already-scored sample and its adjacent copies.
pub fn pac_from_scored(
    original: &ScoredTokens,
    adjacents: &[ScoredTokens],
    k1: f64,
    k2: f64,
) -> Result<f64> {
    if adjacents.is_empty() {
        return Err(Error::InvalidInput("PAC needs at least one adjacent sample".into()));
    }
    let own = polarized_distance(original, k1, k2)?;
    // Averaging offsets from `own` keeps identical adjacents at exactly 0.
    let mut offset = 0.0;
    for adj in adjacents {
        offset += polarized_distance(adj, k1, k2)? - own;
    }
    Ok(0.0 - offset / adjacents.len() as f64)
}

/// Polarized augment calibration score of one sample.
///
/// The sample is whitespace-normalized before scoring so the original and
/// its adjacents share formatting; with `m_ratio = 0` the score is exactly 0.
/// Texts with fewer than two words come back with score 0 and a
/// `degenerate_input` warning.
pub fn pac_score(
    sample: &Sample,
    backend: &dyn LogProbProvider,
    cfg: &DetectorConfig,
) -> Result<ScoreRecord> {
    pac_score_inner(sample, backend, cfg, None)
}

/// As [`pac_score`], restricted to the sample's span: only the span's words
/// are swapped and only tokens inside the span are scored.
pub fn pac_score_span(
    sample: &Sample,
    backend: &dyn LogProbProvider,
    cfg: &DetectorConfig,
) -> Result<ScoreRecord> {
    let span = sample
        .span
        .clone()
        .ok_or_else(|| Error::InvalidInput(format!("sample {} has no span", sample.id)))?;
    pac_score_inner(sample, backend, cfg, Some(span))
}

fn pac_score_inner(
    sample: &Sample,
    backend: &dyn LogProbProvider,
    cfg: &DetectorConfig,
    span: Option<Range<usize>>,
) -> Result<ScoreRecord> {
    cfg.validate()?;
    sample.validate()?;
    let fingerprint = cfg.fingerprint();

    let (prefix, body, suffix) = match &span {
        Some(r) => split_chars(&sample.text, r),
        None => (String::new(), sample.text.clone(), String::new()),
    };
    if body.split_whitespace().count() < 2 {
        log::warn!("sample {}: fewer than two words, PAC falls back to 0", sample.id);
        let mut rec = ScoreRecord::new(&sample.id, Method::Pac, 0.0, fingerprint)?;
        rec.warning = Some("degenerate_input".into());
        return Ok(rec);
    }

    let normalized = normalize_whitespace(&body);
    let mut bodies = vec![normalized.clone()];
    bodies.extend(generate_adjacents(&normalized, cfg)?);

    let texts: Vec<String> = bodies.iter().map(|b| format!("{prefix}{b}{suffix}")).collect();
    let start = prefix.chars().count();
    let scored = score_texts(backend, &texts)
        .into_iter()
        .zip(&bodies)
        .map(|(res, b)| {
            let st = res.map_err(|e| e.with_sample(&sample.id))?;
            if span.is_some() {
                st.restrict_to_span(&(start..start + b.chars().count()))
            } else {
                Ok(st)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let score = pac_from_scored(&scored[0], &scored[1..], cfg.k1, cfg.k2)?;
    ScoreRecord::new(&sample.id, Method::Pac, score, fingerprint)
}

pub(crate) fn split_chars(text: &str, span: &Range<usize>) -> (String, String, String) {
    let chars: Vec<char> = text.chars().collect();
    (
        chars[..span.start].iter().collect(),
        chars[span.start..span.end].iter().collect(),
        chars[span.end..].iter().collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(v: &[f64]) -> ScoredTokens {
        ScoredTokens::from_logprobs(v.to_vec()).unwrap()
    }

    /// Brute force: sort copies of the values, average the ends.
    fn oracle_polar(v: &[f64], k1: f64, k2: f64) -> f64 {
        let l = v.len();
        let size = |k: f64| (((k * l as f64) / 100.0 + 0.5).floor() as usize).max(1).min(l);
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let hi: f64 = s[..size(k1)].iter().sum::<f64>() / size(k1) as f64;
        s.reverse();
        let lo: f64 = s[..size(k2)].iter().sum::<f64>() / size(k2) as f64;
        hi - lo
    }

    #[test]
    fn polarized_distance_examples() {
        let v: Vec<f64> = (1..=10).map(|i| -(i as f64)).collect();
        assert_eq!(oracle_polar(&v, 10.0, 30.0), 8.0);
        assert_eq!(polarized_distance(&st(&v), 10.0, 30.0).unwrap(), 8.0);
        assert_eq!(polarized_distance(&st(&[-3.7; 9]), 5.0, 30.0).unwrap(), 0.0);
        assert_eq!(polarized_distance(&st(&v), 100.0, 100.0).unwrap(), 0.0);
    }

    #[test]
    fn polarized_distance_rejects_bad_percent() {
        assert!(polarized_distance(&st(&[-1.0]), 0.0, 30.0).is_err());
        assert!(polarized_distance(&st(&[-1.0]), 5.0, 101.0).is_err());
    }

    #[test]
    fn set_size_rounds_half_up() {
        assert_eq!(polar_set_size(30.0, 5), 2);
        assert_eq!(polar_set_size(5.0, 10), 1);
        assert_eq!(polar_set_size(5.0, 30), 2);
        assert_eq!(polar_set_size(100.0, 7), 7);
    }

    #[test]
    fn ppl_and_mink_examples() {
        assert_eq!(ppl_score(&st(&[-1.0, -3.0])), -2.0);
        assert_eq!(ppl_score(&st(&[-0.5])), -0.5);
        assert_eq!(mink_score(&st(&[-1.0, -2.0, -3.0, -4.0, -5.0]), 40.0).unwrap(), -4.5);
        assert_eq!(mink_score(&st(&[-2.5; 7]), 20.0).unwrap(), -2.5);
    }

    #[test]
    fn zlib_examples() {
        assert_eq!(zlib_score("hello", &st(&[0.0, 0.0])).unwrap(), 0.0);
        // Python: len(zlib.compress(b"a" * 64, 6)) == 12
        assert_eq!(zlib_size(&"a".repeat(64)).unwrap(), 12);
        let s = zlib_score(&"a".repeat(64), &st(&[-1.0; 63])).unwrap();
        assert_eq!(s, -1.0 / 12.0);
        let doubled = zlib_score(&"a".repeat(64), &st(&[-2.0; 63])).unwrap();
        assert_eq!(doubled, 2.0 * s);
        assert!(zlib_size("").is_err());
    }

    #[test]
    fn lower_and_ref_examples() {
        let a = st(&[-1.0, -2.0]);
        assert_eq!(lower_score(&a, &a), 0.0);
        assert_eq!(lower_score(&st(&[-1.5]), &st(&[-2.0])), 0.5);
        assert_eq!(ref_score(&a, &a), 0.0);
        assert_eq!(ref_score(&st(&[-1.0, -1.0]), &st(&[-3.0])), 2.0);
    }

    #[test]
    fn neighbor_examples() {
        assert_eq!(neighbor_score(1.0, &[3.0, 5.0]).unwrap(), 3.0);
        assert_eq!(neighbor_score(2.0, &[2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(neighbor_score(2.0, &[2.5]).unwrap(), 0.5);
        assert!(neighbor_score(2.0, &[]).is_err());
    }

    #[test]
    fn decide_is_strict() {
        let rec = |s| ScoreRecord::new("x", Method::Pac, s, "f").unwrap();
        assert_eq!(decide(&rec(0.3), 0.2), Label::Member);
        assert_eq!(decide(&rec(0.2), 0.2), Label::Nonmember);
        assert_eq!(decide(&rec(-1.0), 0.0), Label::Nonmember);
    }

    fn logprob_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-15.0f64..=0.0, 1..200)
    }

    proptest! {
        #[test]
        fn polar_matches_oracle_and_bounds(v in logprob_vec(), k1 in 0.5f64..=100.0, k2 in 0.5f64..=100.0) {
            let got = polarized_distance(&st(&v), k1, k2).unwrap();
            prop_assert!((got - oracle_polar(&v, k1, k2).max(0.0)).abs() < 1e-9);
            let max = v.iter().cloned().fold(f64::MIN, f64::max);
            let min = v.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert!(got >= 0.0);
            prop_assert!(got <= max - min + 1e-12);
        }

        #[test]
        fn mink_full_equals_ppl(v in logprob_vec()) {
            let s = st(&v);
            prop_assert!((mink_score(&s, 100.0).unwrap() - ppl_score(&s)).abs() < 1e-12);
        }

        #[test]
        fn decide_monotone(a in -10.0f64..10.0, b in -10.0f64..10.0, eps in -10.0f64..10.0) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            if decide_score(lo, eps) == Label::Member {
                prop_assert_eq!(decide_score(hi, eps), Label::Member);
            }
        }
    }
}
