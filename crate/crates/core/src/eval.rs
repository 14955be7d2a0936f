//! ROC/AUC, F1-max thresholds, threshold stability, per-length reports and
//! contamination rates. Members are the positive class throughout.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::backend::parallel_map;
use crate::bench::length_bucket;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::types::{Label, Sample};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub members: Vec<f64>,
    pub nonmembers: Vec<f64>,
}

impl LabeledScores {
    pub fn new(members: Vec<f64>, nonmembers: Vec<f64>) -> Self {
        Self { members, nonmembers }
    }

    pub fn from_pairs<I: IntoIterator<Item = (Label, f64)>>(pairs: I) -> Self {
        let mut ls = Self::default();
        for (label, s) in pairs {
            ls.push(label, s);
        }
        ls
    }

    pub fn push(&mut self, label: Label, score: f64) {
        match label {
            Label::Member => self.members.push(score),
            Label::Nonmember => self.nonmembers.push(score),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len() + self.nonmembers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() || self.nonmembers.is_empty() {
            return Err(Error::InvalidInput(format!(
                "need both classes, got {} members and {} non-members",
                self.members.len(),
                self.nonmembers.len()
            )));
        }
        if self.members.iter().chain(&self.nonmembers).any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("scores must be finite".into()));
        }
        Ok(())
    }

    /// Class labels swapped and scores negated.
    pub fn mirrored(&self) -> Self {
        Self {
            members: self.nonmembers.iter().map(|s| -s).collect(),
            nonmembers: self.members.iter().map(|s| -s).collect(),
        }
    }
}

/// Mann-Whitney statistic: the fraction of (member, non-member) pairs in
/// which the member scores higher, ties counting one half.
pub fn auc(ls: &LabeledScores) -> Result<f64> {
    ls.validate()?;
    let mut non = ls.nonmembers.clone();
    non.sort_by(f64::total_cmp);
    let mut wins = 0.0;
    for &m in &ls.members {
        let below = non.partition_point(|&x| x < m);
        let not_above = non.partition_point(|&x| x <= m);
        wins += below as f64 + 0.5 * (not_above - below) as f64;
    }
    Ok(wins / (ls.members.len() as f64 * ls.nonmembers.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Scores at or above this are called members; infinite at (0, 0).
    #[serde(with = "nonfinite")]
    pub threshold: f64,
}

/// One point per distinct score, from (0, 0) to (1, 1).
pub fn roc_curve(ls: &LabeledScores) -> Result<Vec<RocPoint>> {
    ls.validate()?;
    let mut all: Vec<(f64, bool)> = ls
        .members
        .iter()
        .map(|&s| (s, true))
        .chain(ls.nonmembers.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (pos, neg) = (ls.members.len() as f64, ls.nonmembers.len() as f64);
    let mut out = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push(RocPoint { fpr: fp as f64 / neg, tpr: tp as f64 / pos, threshold: t });
    }
    Ok(out)
}

/// Trapezoidal area under an ROC curve.
pub fn roc_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Member iff score > epsilon.
    pub fn at(ls: &LabeledScores, epsilon: f64) -> Self {
        let tp = ls.members.iter().filter(|&&s| s > epsilon).count();
        let fp = ls.nonmembers.iter().filter(|&&s| s > epsilon).count();
        Confusion { tp, fp, tn: ls.nonmembers.len() - fp, fn_: ls.members.len() - tp }
    }

    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        (self.tp + self.tn) as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    #[serde(with = "nonfinite")]
    pub epsilon: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub fraction_used: f64,
}

/// Candidate thresholds: `-inf`, midpoints between distinct scores, `+inf`.
fn candidate_thresholds(ls: &LabeledScores) -> Vec<f64> {
    let mut s: Vec<f64> = ls.members.iter().chain(&ls.nonmembers).copied().collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    let mut out = Vec::with_capacity(s.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(s.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Threshold maximizing F1; ties go to the smallest epsilon.
pub fn f1_max_threshold(ls: &LabeledScores) -> Result<ThresholdReport> {
    ls.validate()?;
    let mut best: Option<(f64, Confusion)> = None;
    for eps in candidate_thresholds(ls) {
        let c = Confusion::at(ls, eps);
        if best.as_ref().is_none_or(|(_, b)| c.f1() > b.f1()) {
            best = Some((eps, c));
        }
    }
    let (epsilon, c) = best.expect("at least two candidates");
    Ok(ThresholdReport { epsilon, f1: c.f1(), accuracy: c.accuracy(), fraction_used: 1.0 })
}

pub const DEFAULT_FRACTIONS: [f64; 9] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];
pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionSummary {
    pub fraction: f64,
    /// Mean full-set accuracy of the subset-calibrated thresholds.
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    #[serde(with = "nonfinite")]
    pub epsilon_mean: f64,
    #[serde(with = "nonfinite")]
    pub epsilon_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub full: ThresholdReport,
    pub per_fraction: Vec<FractionSummary>,
    /// Population standard deviation of epsilon over every subset drawn.
    #[serde(with = "nonfinite")]
    pub epsilon_std: f64,
    pub mean_accuracy: f64,
    pub trials: usize,
    pub seed: u64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.windows(2).all(|w| w[0] == w[1]) {
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

/// Class-stratified random subset holding `fraction` of each class, at
/// least one sample per class.
pub fn stratified_subset(ls: &LabeledScores, fraction: f64, seed: u64) -> LabeledScores {
    let mut rng = SplitMix64::new(seed);
    let mut take = |xs: &[f64]| -> Vec<f64> {
        let k = ((fraction * xs.len() as f64).round() as usize).clamp(1, xs.len());
        rng.sample_indices(xs.len(), k).into_iter().map(|i| xs[i]).collect()
    };
    let members = take(&ls.members);
    let nonmembers = take(&ls.nonmembers);
    LabeledScores { members, nonmembers }
}

/// Calibrates thresholds on random subsets and measures them on the full
/// set. Trial `t` of fraction `f` uses seed `derive_seed(seed, f_idx * trials + t)`.
pub fn threshold_stability(
    ls: &LabeledScores,
    fractions: &[f64],
    trials: usize,
    seed: u64,
) -> Result<StabilitySummary> {
    ls.validate()?;
    if fractions.is_empty() || trials == 0 {
        return Err(Error::InvalidConfig("need at least one fraction and one trial".into()));
    }
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(Error::InvalidConfig(format!("fraction {f} outside (0, 1]")));
    }
    let full = f1_max_threshold(ls)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let runs = parallel_map(workers, fractions.len() * trials, |j| {
        let f = fractions[j / trials];
        let sub = stratified_subset(ls, f, derive_seed(seed, j as u64));
        let rep = f1_max_threshold(&sub).expect("subset keeps both classes");
        (rep.epsilon, Confusion::at(ls, rep.epsilon).accuracy())
    });
    let mut per_fraction = Vec::with_capacity(fractions.len());
    for (fi, &fraction) in fractions.iter().enumerate() {
        let chunk = &runs[fi * trials..(fi + 1) * trials];
        let eps: Vec<f64> = chunk.iter().map(|r| r.0).collect();
        let accs: Vec<f64> = chunk.iter().map(|r| r.1).collect();
        let (epsilon_mean, epsilon_std) = mean_std(&eps);
        per_fraction.push(FractionSummary {
            fraction,
            mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
            min_accuracy: accs.iter().copied().fold(f64::INFINITY, f64::min),
            epsilon_mean,
            epsilon_std,
        });
    }
    let all_eps: Vec<f64> = runs.iter().map(|r| r.0).collect();
    Ok(StabilitySummary {
        full,
        per_fraction,
        epsilon_std: mean_std(&all_eps).1,
        mean_accuracy: runs.iter().map(|r| r.1).sum::<f64>() / runs.len() as f64,
        trials,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: u32,
    pub members: usize,
    pub nonmembers: usize,
    /// Absent when the bucket lacks a class.
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub rows: Vec<BucketRow>,
    pub overall: Option<f64>,
    /// Labeled samples outside every bucket; still counted in `overall`.
    pub unbucketed: usize,
}

/// AUC per length bucket plus overall. Unlabeled samples are skipped.
pub fn bucketed_report<'a, I>(items: I) -> BucketReport
where
    I: IntoIterator<Item = (&'a Sample, f64)>,
{
    let mut by_bucket: BTreeMap<u32, LabeledScores> = BTreeMap::new();
    let mut all = LabeledScores::default();
    let mut unbucketed = 0;
    for (sample, score) in items {
        let Some(label) = sample.label else { continue };
        all.push(label, score);
        match length_bucket(&sample.text) {
            Some(b) => by_bucket.entry(b).or_default().push(label, score),
            None => unbucketed += 1,
        }
    }
    let rows = by_bucket
        .into_iter()
        .map(|(bucket, ls)| BucketRow {
            bucket,
            members: ls.members.len(),
            nonmembers: ls.nonmembers.len(),
            auc: auc(&ls).ok(),
        })
        .collect();
    BucketReport { rows, overall: auc(&all).ok(), unbucketed }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    pub epsilon: f64,
    pub count: usize,
    pub total: usize,
    pub rate: f64,
}

/// Fraction of scores strictly above `epsilon`.
pub fn contamination_rate(scores: &[f64], epsilon: f64) -> Result<ContaminationReport> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores".into()));
    }
    let count = scores.iter().filter(|&&s| s > epsilon).count();
    Ok(ContaminationReport {
        epsilon,
        count,
        total: scores.len(),
        rate: count as f64 / scores.len() as f64,
    })
}

/// Left-aligned first column, right-aligned rest, two-space gutters.
pub fn format_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| -> String {
        let parts: Vec<String> = cells
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&mut headers.iter().copied());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
    }
    out
}

const PALETTE: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

/// Static SVG chart of one or more named ROC curves.
pub fn roc_svg(curves: &[(String, Vec<RocPoint>)]) -> String {
    let (size, pad) = (400.0, 50.0);
    let x = |f: f64| pad + f * size;
    let y = |t: f64| pad + (1.0 - t) * size;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#,
        w = size + 2.0 * pad + 150.0,
        h = size + 2.0 * pad
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#999" stroke-dasharray="4 4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#, x(v), y(0.0) + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#, x(0.0) - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">FPR</text>"#, x(0.5), y(0.0) + 38.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">TPR</text>"#,
        y(0.5),
        y(0.5)
    );
    for (i, (name, pts)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        let ly = pad + 16.0 * i as f64 + 10.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#,
            x(1.0) + 12.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// JSON cannot carry infinities; they travel as the strings `"inf"` and `"-inf"`.
mod nonfinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("bad number {s:?}"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ls(m: &[f64], n: &[f64]) -> LabeledScores {
        LabeledScores::new(m.to_vec(), n.to_vec())
    }

    fn brute_auc(ls: &LabeledScores) -> f64 {
        let mut w = 0.0;
        for &m in &ls.members {
            for &n in &ls.nonmembers {
                w += if m > n { 1.0 } else if m == n { 0.5 } else { 0.0 };
            }
        }
        w / (ls.members.len() * ls.nonmembers.len()) as f64
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&ls(&[2.0, 3.0], &[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(auc(&ls(&[1.0], &[1.0])).unwrap(), 0.5);
        assert_eq!(auc(&ls(&[0.9, 0.4], &[0.5, 0.1])).unwrap(), 0.75);
        assert!(auc(&ls(&[], &[1.0])).is_err());
        assert!(auc(&ls(&[f64::NAN], &[1.0])).is_err());
    }

    #[test]
    fn roc_examples() {
        let perfect = roc_curve(&ls(&[2.0, 3.0], &[0.0, 1.0])).unwrap();
        assert!(perfect.iter().any(|p| p.fpr == 0.0 && p.tpr == 1.0));
        let tie = roc_curve(&ls(&[1.0], &[1.0])).unwrap();
        let coords: Vec<_> = tie.iter().map(|p| (p.fpr, p.tpr)).collect();
        assert_eq!(coords, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(roc_area(&tie), 0.5);
    }

    #[test]
    fn f1_examples() {
        let r = f1_max_threshold(&ls(&[0.9, 0.8], &[0.2])).unwrap();
        assert!(r.epsilon > 0.2 && r.epsilon < 0.8);
        assert_eq!((r.f1, r.accuracy), (1.0, 1.0));

        let flat = ls(&[1.0, 1.0], &[1.0, 1.0, 1.0]);
        let r = f1_max_threshold(&flat).unwrap();
        assert_eq!(r.epsilon, f64::NEG_INFINITY);
        assert_eq!(r.f1, 2.0 * 2.0 / (4.0 + 3.0));
        assert_eq!(r.accuracy, 0.4);
    }

    #[test]
    fn f1_mirror_symmetry() {
        let a = ls(&[0.9, 0.3, 0.7], &[0.2, 0.5, 0.1, 0.4]);
        let r = f1_max_threshold(&a).unwrap();
        let m = f1_max_threshold(&a.mirrored()).unwrap();
        assert_eq!(r.accuracy, Confusion::at(&a, r.epsilon).accuracy());
        // Mirroring flips which class is positive, so compare the decisions.
        let call = |ls: &LabeledScores, e: f64| Confusion::at(ls, e);
        let c = call(&a, r.epsilon);
        let cm = call(&a.mirrored(), m.epsilon);
        assert_eq!(c.tp + c.tn, cm.tp + cm.tn);
    }

    #[test]
    fn contamination_examples() {
        let r = contamination_rate(&[1.0, 2.0, 3.0], 1.5).unwrap();
        assert_eq!((r.count, r.total), (2, 3));
        assert_eq!(r.rate, 2.0 / 3.0);
        assert_eq!(contamination_rate(&[1.0, 2.0], 9.0).unwrap().rate, 0.0);
        assert!(contamination_rate(&[], 0.0).is_err());
    }

    #[test]
    fn stability_degenerate_cases() {
        let flat = ls(&[1.0; 10], &[1.0; 10]);
        let s = threshold_stability(&flat, &DEFAULT_FRACTIONS, 5, 1).unwrap();
        assert_eq!(s.epsilon_std, 0.0);

        let a = ls(&[0.9, 0.3, 0.7, 0.6], &[0.2, 0.5, 0.1, 0.4]);
        let s = threshold_stability(&a, &[1.0], 1, 9).unwrap();
        assert_eq!(s.per_fraction[0].epsilon_mean, s.full.epsilon);
        assert_eq!(s.per_fraction[0].mean_accuracy, s.full.accuracy);
        assert!(threshold_stability(&a, &[0.0], 1, 9).is_err());
        assert!(threshold_stability(&a, &[0.5], 0, 9).is_err());
    }

    #[test]
    fn stratified_subset_sizes() {
        let a = LabeledScores::new((0..20).map(f64::from).collect(), (0..30).map(f64::from).collect());
        let s = stratified_subset(&a, 0.1, 3);
        assert_eq!((s.members.len(), s.nonmembers.len()), (2, 3));
        assert_eq!(s, stratified_subset(&a, 0.1, 3));
    }

    #[test]
    fn bucketed_examples() {
        let text = |n: usize| vec!["w"; n].join(" ");
        let mk = |id: &str, n: usize, l: Label| Sample::new(id, text(n)).unwrap().with_label(l);
        let samples = vec![
            (mk("a", 40, Label::Member), 2.0),
            (mk("b", 40, Label::Nonmember), 1.0),
            (mk("c", 70, Label::Member), 0.5),
            (mk("d", 10, Label::Nonmember), 3.0),
        ];
        let r = bucketed_report(samples.iter().map(|(s, x)| (s, *x)));
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].auc, Some(1.0));
        assert_eq!(r.rows[1].auc, None);
        assert_eq!(r.unbucketed, 1);
        assert_eq!(r.overall, Some(0.25));

        let single = bucketed_report(samples[..2].iter().map(|(s, x)| (s, *x)));
        assert_eq!(single.rows[0].auc, single.overall);
    }

    #[test]
    fn table_alignment() {
        let t = format_table(&["method", "auc"], &[vec!["pac".into(), "0.91".into()], vec!["ppl".into(), "0.8".into()]]);
        assert_eq!(t, "method   auc\n------------\npac     0.91\nppl      0.8\n");
    }

    #[test]
    fn nonfinite_round_trip() {
        let r = ThresholdReport { epsilon: f64::NEG_INFINITY, f1: 0.5, accuracy: 0.5, fraction_used: 1.0 };
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains(r#""epsilon":"-inf""#));
        let back: ThresholdReport = serde_json::from_str(&j).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn svg_and_csv_render() {
        let pts = roc_curve(&ls(&[0.9, 0.4], &[0.5, 0.1])).unwrap();
        let svg = roc_svg(&[("pac <k>".into(), pts.clone())]);
        assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.contains("pac &lt;k&gt;"));
        let csv = roc_csv(&pts);
        assert_eq!(csv.lines().count(), pts.len() + 1);
    }

    fn small_scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0i32..8).prop_map(|v| f64::from(v) / 2.0), 1..20)
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(m in small_scores(), n in small_scores()) {
            let l = ls(&m, &n);
            prop_assert_eq!(auc(&l).unwrap(), brute_auc(&l));
        }

        #[test]
        fn roc_area_matches_auc(m in small_scores(), n in small_scores()) {
            let l = ls(&m, &n);
            let pts = roc_curve(&l).unwrap();
            prop_assert!(pts.windows(2).all(|w| w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr));
            prop_assert_eq!((pts[0].fpr, pts[0].tpr), (0.0, 0.0));
            prop_assert_eq!((pts.last().unwrap().fpr, pts.last().unwrap().tpr), (1.0, 1.0));
            prop_assert!((roc_area(&pts) - auc(&l).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn auc_complement(m in small_scores(), n in small_scores()) {
            let a = auc(&ls(&m, &n)).unwrap();
            let b = auc(&ls(&n, &m)).unwrap();
            prop_assert_eq!(a + b, 1.0);
        }

        #[test]
        fn auc_monotone_invariant(m in small_scores(), n in small_scores(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
            let f = |x: &f64| (a * x + b).exp();
            let l = ls(&m, &n);
            let t = LabeledScores::new(m.iter().map(f).collect(), n.iter().map(f).collect());
            prop_assert_eq!(auc(&l).unwrap(), auc(&t).unwrap());
        }

        #[test]
        fn f1_report_reproducible(m in small_scores(), n in small_scores()) {
            let l = ls(&m, &n);
            let r = f1_max_threshold(&l).unwrap();
            let c = Confusion::at(&l, r.epsilon);
            prop_assert_eq!(c.accuracy(), r.accuracy);
            prop_assert_eq!(c.f1(), r.f1);
            for eps in candidate_thresholds(&l) {
                prop_assert!(Confusion::at(&l, eps).f1() <= r.f1);
            }
        }
    }
}
