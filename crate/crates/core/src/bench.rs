//! Time-split benchmark construction from raw post records.
//!
//! Records whose whole thread predates the member cutoff become members;
//! records posted on or after the non-member start become non-members;
//! everything in between is excluded. Samples are then bucketed by word
//! count and balanced per bucket. A BLEU gate validates paraphrased copies.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;

use chrono::{DateTime, NaiveDate, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::normalize_whitespace;
use crate::error::{Error, Result};
use crate::types::{Form, Label, Sample};

/// One post as read from the input file. Times stay as strings until
/// [`build_split`] so a bad timestamp only rejects its own record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub post_time: String,
    pub last_activity_time: String,
    #[serde(default)]
    pub site: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// Record id, or `line N` when the line itself did not parse.
    pub id: String,
    pub reason: String,
}

/// Reads JSON-lines records; unparseable lines are rejected, not fatal.
pub fn read_raw_records<R: BufRead>(reader: R) -> Result<(Vec<RawRecord>, Vec<Rejection>)> {
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(&line) {
            Ok(r) => records.push(r),
            Err(e) => rejected.push(Rejection { id: format!("line {}", i + 1), reason: e.to_string() }),
        }
    }
    Ok((records, rejected))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPolicy {
    /// Threads whose last activity is strictly before this are members.
    pub member_cutoff: DateTime<Utc>,
    /// Posts at or after this are non-members.
    pub nonmember_start: DateTime<Utc>,
}

fn midnight(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc()
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self { member_cutoff: midnight(2017, 1, 1), nonmember_start: midnight(2023, 5, 1) }
    }
}

impl SplitPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.member_cutoff > self.nonmember_start {
            return Err(Error::InvalidConfig("member cutoff is after non-member start".into()));
        }
        Ok(())
    }
}

/// Accepts RFC 3339 or a bare `YYYY-MM-DD` (midnight UTC).
pub fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| Error::InvalidInput(format!("bad timestamp {s:?}")))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub samples: Vec<Sample>,
    pub excluded: Vec<String>,
    pub rejected: Vec<Rejection>,
}

impl SplitResult {
    pub fn count(&self, label: Label) -> usize {
        self.samples.iter().filter(|s| s.label == Some(label)).count()
    }
}

/// Labels each record by its timestamps. Output is sorted by id.
pub fn build_split(records: &[RawRecord], policy: &SplitPolicy) -> Result<SplitResult> {
    policy.validate()?;
    let mut out = SplitResult::default();
    let mut seen = HashSet::new();
    for r in records {
        let reject = |reason: String| Rejection { id: r.id.clone(), reason };
        if !seen.insert(r.id.as_str()) {
            out.rejected.push(reject("duplicate id".into()));
            continue;
        }
        let (post, last) = match (parse_time(&r.post_time), parse_time(&r.last_activity_time)) {
            (Ok(p), Ok(l)) => (p, l),
            (Err(e), _) | (_, Err(e)) => {
                out.rejected.push(reject(e.to_string()));
                continue;
            }
        };
        if post > last {
            out.rejected.push(reject("post_time after last_activity_time".into()));
            continue;
        }
        let label = if last < policy.member_cutoff {
            Label::Member
        } else if post >= policy.nonmember_start {
            Label::Nonmember
        } else {
            out.excluded.push(r.id.clone());
            continue;
        };
        match Sample::new(r.id.clone(), r.text.clone()) {
            Ok(mut s) => {
                s.label = Some(label);
                s.created_at = Some(post);
                out.samples.push(s);
            }
            Err(e) => out.rejected.push(reject(e.to_string())),
        }
    }
    out.samples.sort_by(|a, b| a.id.cmp(&b.id));
    out.excluded.sort();
    Ok(out)
}

pub const BUCKETS: [u32; 4] = [32, 64, 128, 256];
pub const MAX_WORDS: usize = 512;

/// Largest bucket not above the word count; none below 32 or at 512+.
pub fn length_bucket(text: &str) -> Option<u32> {
    let w = text.split_whitespace().count();
    if w >= MAX_WORDS {
        return None;
    }
    BUCKETS.iter().rev().copied().find(|&b| b as usize <= w)
}

/// Per bucket, trims the larger class down to the size of the smaller one,
/// dropping the highest ids first. Unbucketed and unlabeled samples pass
/// through untouched. Output is sorted by id.
pub fn balance_by_length(samples: Vec<Sample>) -> Vec<Sample> {
    let mut groups: BTreeMap<(u32, Label), Vec<Sample>> = BTreeMap::new();
    let mut out = Vec::new();
    for s in samples {
        match (length_bucket(&s.text), s.label) {
            (Some(b), Some(l)) => groups.entry((b, l)).or_default().push(s),
            _ => out.push(s),
        }
    }
    for b in BUCKETS {
        let m = groups.remove(&(b, Label::Member)).unwrap_or_default();
        let n = groups.remove(&(b, Label::Nonmember)).unwrap_or_default();
        let keep = m.len().min(n.len());
        for mut class in [m, n] {
            class.sort_by(|a, b| a.id.cmp(&b.id));
            class.truncate(keep);
            out.extend(class);
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    out
}

/// Optional cleaning applied before the split.
#[derive(Debug, Clone, Default)]
pub struct PreFilter {
    pub strip_html: bool,
    pub dedup: bool,
    /// Records whose text matches are dropped (e.g. formulas or code).
    pub exclude: Option<Regex>,
}

impl PreFilter {
    /// Sets the exclusion regex from its source text.
    pub fn exclude_pattern(mut self, pattern: &str) -> Result<Self> {
        let re = Regex::new(pattern).map_err(|e| Error::InvalidConfig(format!("exclude pattern: {e}")))?;
        self.exclude = Some(re);
        Ok(self)
    }
}

fn tag_pattern() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"</?[A-Za-z][A-Za-z0-9-]*(\s[^<>]*)?/?>").unwrap())
}

/// Removes tags and decodes the five basic entities.
pub fn strip_html(text: &str) -> String {
    let bare = tag_pattern().replace_all(text, " ");
    let decoded = bare
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&amp;", "&");
    normalize_whitespace(&decoded)
}

impl PreFilter {
    pub fn apply(&self, records: Vec<RawRecord>) -> (Vec<RawRecord>, Vec<Rejection>) {
        let mut kept = Vec::with_capacity(records.len());
        let mut rejected = Vec::new();
        let mut hashes = HashSet::new();
        let mut records = records;
        records.sort_by(|a, b| a.id.cmp(&b.id));
        for mut r in records {
            if self.strip_html {
                r.text = strip_html(&r.text);
            }
            if let Some(re) = &self.exclude {
                if re.is_match(&r.text) {
                    rejected.push(Rejection { id: r.id, reason: "matches exclude pattern".into() });
                    continue;
                }
            }
            if self.dedup {
                let h: [u8; 32] = Sha256::digest(normalize_whitespace(&r.text).as_bytes()).into();
                if !hashes.insert(h) {
                    rejected.push(Rejection { id: r.id, reason: "duplicate text".into() });
                    continue;
                }
            }
            kept.push(r);
        }
        (kept, rejected)
    }
}

/// One benchmark line as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub id: String,
    pub text: String,
    pub label: Label,
    pub created_at: Option<DateTime<Utc>>,
    pub form: Form,
    pub bucket: Option<u32>,
}

impl BenchRow {
    pub fn from_sample(s: &Sample) -> Option<Self> {
        Some(BenchRow {
            id: s.id.clone(),
            text: s.text.clone(),
            label: s.label?,
            created_at: s.created_at,
            form: s.form,
            bucket: length_bucket(&s.text),
        })
    }
}

fn ngram_counts(words: &[&str], n: usize) -> HashMap<Vec<String>, usize> {
    let mut counts = HashMap::new();
    for w in words.windows(n) {
        *counts.entry(w.iter().map(|s| s.to_string()).collect()).or_insert(0) += 1;
    }
    counts
}

/// Sentence BLEU-4 over case-sensitive whitespace tokens.
///
/// A zero unigram match gives 0. For orders 2 to 4 a zero match count
/// becomes `1 / (total + 1)`. The brevity penalty is
/// `exp(min(0, 1 - ref_len / cand_len))`.
pub fn bleu(candidate: &str, reference: &str) -> f64 {
    let c: Vec<&str> = candidate.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(&c, n);
        let refs = ngram_counts(&r, n);
        let matches: usize = cand.iter().map(|(g, &k)| k.min(refs.get(g).copied().unwrap_or(0))).sum();
        let total = c.len().saturating_sub(n - 1);
        let p = if matches > 0 {
            matches as f64 / total as f64
        } else if n == 1 {
            return 0.0;
        } else {
            1.0 / (total + 1) as f64
        };
        log_sum += p.ln();
    }
    let bp = (1.0 - r.len() as f64 / c.len() as f64).min(0.0).exp();
    bp * (log_sum / 4.0).exp()
}

pub const GATE_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphrasePair {
    pub id: String,
    pub ori: String,
    pub syn: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub id: String,
    pub bleu: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub threshold: f64,
    pub decisions: Vec<GateDecision>,
}

impl GateReport {
    pub fn accepted<'a>(&self, pairs: &'a [ParaphrasePair]) -> Vec<&'a ParaphrasePair> {
        pairs.iter().zip(&self.decisions).filter(|(_, d)| d.accepted).map(|(p, _)| p).collect()
    }

    pub fn accepted_count(&self) -> usize {
        self.decisions.iter().filter(|d| d.accepted).count()
    }
}

/// Keeps pairs with `bleu(syn, ori) > threshold`.
pub fn paraphrase_gate(pairs: &[ParaphrasePair], threshold: f64) -> GateReport {
    let decisions = pairs
        .iter()
        .map(|p| {
            let b = bleu(&p.syn, &p.ori);
            GateDecision { id: p.id.clone(), bleu: b, accepted: b > threshold }
        })
        .collect();
    GateReport { threshold, decisions }
}

/// A few original/rewrite pairs produced by a chat model on real posts.
pub fn example_rewrites() -> Vec<ParaphrasePair> {
    include_str!("../data/rewrite_pairs.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).expect("bundled pairs parse"))
        .collect()
}
