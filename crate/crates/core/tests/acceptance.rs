//! One line per primary acceptance criterion; exits non-zero if any fails.

use std::time::{Duration, Instant};

use pacmia::augment::random_swap;
use pacmia::backend::{SyntheticModel, SyntheticModelSpec};
use pacmia::bench::{
    bleu, build_split, example_rewrites, paraphrase_gate, ParaphrasePair, RawRecord, SplitPolicy, GATE_THRESHOLD,
};
use pacmia::eval::{auc, roc_area, roc_curve, threshold_stability, LabeledScores, DEFAULT_FRACTIONS, DEFAULT_TRIALS};
use pacmia::rng::SplitMix64;
use pacmia::scoring::{lower_score, mink_score, pac_score, polarized_distance, ppl_score, ref_score};
use pacmia::testbed::{labeled, Testbed, TestbedConfig};
use pacmia::tracker::{recover_token_logprob, TrackerConfig};
use pacmia::{DetectorConfig, Label, Method, ScoredTokens, TokenId};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let took = t.elapsed();
    let in_time = took <= limit;
    let pass = out.pass && in_time;
    println!(
        "{} {name}: {} [{:.2}s / {}s limit]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn random_logprobs(rng: &mut SplitMix64, len: usize) -> Vec<f64> {
    (0..len).map(|_| -15.0 * rng.next_f64()).collect()
}

fn st(v: Vec<f64>) -> ScoredTokens {
    ScoredTokens::from_logprobs(v).unwrap()
}

fn oracle_polar(v: &[f64], k1: f64, k2: f64) -> f64 {
    let l = v.len();
    let size = |k: f64| ((k * l as f64 / 100.0 + 0.5).floor() as usize).clamp(1, l);
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let hi = s[..size(k1)].iter().sum::<f64>() / size(k1) as f64;
    s.reverse();
    let lo = s[..size(k2)].iter().sum::<f64>() / size(k2) as f64;
    hi - lo
}

fn polarized_oracle() -> Outcome {
    let mut rng = SplitMix64::new(1);
    let (mut worst, mut negative) = (0f64, 0);
    for _ in 0..1000 {
        let len = 1 + rng.below(200);
        let v = random_logprobs(&mut rng, len);
        let k1 = 1.0 + rng.below(100) as f64;
        let k2 = 1.0 + rng.below(100) as f64;
        let got = polarized_distance(&st(v.clone()), k1, k2).unwrap();
        worst = worst.max((got - oracle_polar(&v, k1, k2)).abs());
        negative += (got < 0.0) as usize;
    }
    Outcome {
        pass: worst <= 1e-9 && negative == 0,
        detail: format!("max |err| {worst:.2e} over 1000 vectors, {negative} negative"),
    }
}

fn baseline_identities() -> Outcome {
    let mut rng = SplitMix64::new(2);
    let (mut mink_err, mut polar_max, mut ident_max) = (0f64, 0f64, 0f64);
    for _ in 0..1000 {
        let len = 1 + rng.below(200);
        let s = st(random_logprobs(&mut rng, len));
        mink_err = mink_err.max((mink_score(&s, 100.0).unwrap() - ppl_score(&s)).abs());
        polar_max = polar_max.max(polarized_distance(&s, 100.0, 100.0).unwrap().abs());
        ident_max = ident_max.max(lower_score(&s, &s).abs()).max(ref_score(&s, &s).abs());
    }
    Outcome {
        pass: mink_err <= 1e-12 && polar_max == 0.0 && ident_max == 0.0,
        detail: format!(
            "|mink100-ppl| {mink_err:.1e}, max L_M(100,100) {polar_max}, max lower/ref on equal inputs {ident_max}"
        ),
    }
}

fn auc_oracle() -> Outcome {
    let mut rng = SplitMix64::new(3);
    let (mut mismatches, mut area_err) = (0, 0f64);
    for _ in 0..1000 {
        let draw = |rng: &mut SplitMix64| -> Vec<f64> {
            let n = 1 + rng.below(20);
            (0..n).map(|_| rng.below(10) as f64 / 4.0).collect()
        };
        let ls = LabeledScores::new(draw(&mut rng), draw(&mut rng));
        let mut w = 0.0;
        for &m in &ls.members {
            for &n in &ls.nonmembers {
                w += if m > n { 1.0 } else if m == n { 0.5 } else { 0.0 };
            }
        }
        let brute = w / (ls.members.len() * ls.nonmembers.len()) as f64;
        let a = auc(&ls).unwrap();
        mismatches += (a != brute) as usize;
        area_err = area_err.max((roc_area(&roc_curve(&ls).unwrap()) - a).abs());
    }
    Outcome {
        pass: mismatches == 0 && area_err <= 1e-12,
        detail: format!("{mismatches} exact mismatches, max |trapezoid-auc| {area_err:.1e}"),
    }
}

fn tracker_exactness() -> Outcome {
    let mut rng = SplitMix64::new(4);
    let corpus: Vec<Vec<TokenId>> = (0..20)
        .map(|_| (0..30).map(|_| 1 + rng.below(999) as TokenId).collect())
        .collect();
    let model = SyntheticModel::new(SyntheticModelSpec::new(1000, corpus.clone(), 0.9, 4)).unwrap();
    let cfg = TrackerConfig { topn: 5, tol: 0.01, ..Default::default() };
    let (mut ok, mut max_err, mut max_q, mut searched, mut failures) = (0, 0f64, 0, 0, 0);
    for i in 0..1000 {
        let prefix: Vec<TokenId> = if i % 2 == 0 {
            let doc = &corpus[rng.below(corpus.len())];
            doc[..rng.below(doc.len())].to_vec()
        } else {
            (0..rng.below(20)).map(|_| rng.below(1000) as TokenId).collect()
        };
        let target = rng.below(1000) as TokenId;
        let truth = model.next_distribution(&prefix).unwrap()[target as usize].ln();
        match recover_token_logprob(&model, &prefix, target, &cfg) {
            Ok(r) => {
                let err = (r.logprob - truth).abs();
                max_err = max_err.max(err);
                max_q = max_q.max(r.bias_queries);
                searched += r.gamma.is_some() as usize;
                ok += (err <= 0.02 && r.bias_queries <= 16) as usize;
            }
            Err(_) => failures += 1,
        }
    }
    Outcome {
        pass: ok == 1000,
        detail: format!(
            "{ok}/1000 within 0.02 (max err {max_err:.4}), {searched} searched, max {max_q} bias queries, {failures} errors"
        ),
    }
}

fn testbed_scores(methods: &[Method]) -> (Testbed, pacmia::testbed::TestbedRun) {
    let tb = Testbed::build(TestbedConfig::default()).unwrap();
    let run = tb.run(&DetectorConfig::default(), methods).unwrap();
    (tb, run)
}

fn headline_ordering() -> Outcome {
    let (_, run) = testbed_scores(&[Method::Pac, Method::Ppl]);
    let (pac, ppl) = (run.auc[&Method::Pac], run.auc[&Method::Ppl]);
    Outcome {
        pass: pac >= 0.80 && pac >= ppl,
        detail: format!("PAC AUC {pac:.4}, PPL AUC {ppl:.4} (need PAC >= 0.80 and >= PPL)"),
    }
}

fn threshold_stability_check() -> Outcome {
    let (tb, run) = testbed_scores(&[Method::Pac]);
    let ls = labeled(&tb.samples, &run.scores[&Method::Pac]);
    let s = threshold_stability(&ls, &DEFAULT_FRACTIONS, DEFAULT_TRIALS, 42).unwrap();
    let tenth = &s.per_fraction[0];
    let gap = (tenth.mean_accuracy - s.full.accuracy).abs();
    Outcome {
        pass: gap <= 0.05 && s.epsilon_std.is_finite(),
        detail: format!(
            "full acc {:.4}, 10% subsets mean acc {:.4} (min {:.4}), gap {gap:.4}; eps std {:.4}",
            s.full.accuracy, tenth.mean_accuracy, tenth.min_accuracy, s.epsilon_std
        ),
    }
}

fn augmentation_properties() -> Outcome {
    let mut rng = SplitMix64::new(5);
    let mut multiset_ok = 0;
    let mut determinism_ok = 0;
    for i in 0..1000 {
        let n = 2 + rng.below(40);
        let words: Vec<String> = (0..n).map(|_| format!("w{}", rng.below(8))).collect();
        let m = rng.below(10);
        let out = random_swap(&words, m, i).unwrap();
        let (mut a, mut b) = (words.clone(), out.clone());
        a.sort();
        b.sort();
        multiset_ok += (a == b) as usize;
        determinism_ok += (out == random_swap(&words, m, i).unwrap()) as usize;
    }
    let tb = Testbed::build(TestbedConfig { members: 10, nonmembers: 10, ..Default::default() }).unwrap();
    let cfg = DetectorConfig { m_ratio: 0.0, ..Default::default() };
    let zero = tb
        .samples
        .iter()
        .filter(|s| pac_score(s, &tb.target, &cfg).unwrap().score == 0.0)
        .count();
    let s = &tb.samples[0];
    let repeat = pac_score(s, &tb.target, &DetectorConfig::default()).unwrap()
        == pac_score(s, &tb.target, &DetectorConfig::default()).unwrap();
    Outcome {
        pass: multiset_ok == 1000 && determinism_ok == 1000 && zero == tb.samples.len() && repeat,
        detail: format!(
            "multiset {multiset_ok}/1000, deterministic {determinism_ok}/1000, m_ratio=0 gives 0 on {zero}/{} samples, repeat pac identical {repeat}",
            tb.samples.len()
        ),
    }
}

fn bench_pipeline() -> Outcome {
    let mut rng = SplitMix64::new(6);
    let day = 86_400i64;
    let start = 1_388_534_400i64; // 2014-01-01
    let records: Vec<RawRecord> = (0..10_000)
        .map(|i| {
            let post = start + rng.below(12 * 365) as i64 * day;
            let last = post + rng.below(3 * 365) as i64 * day;
            let fmt = |t: i64| chrono::DateTime::from_timestamp(t, 0).unwrap().to_rfc3339();
            let post_s = if i % 500 == 0 { "garbage".to_string() } else { fmt(post) };
            RawRecord { id: format!("r{i:05}"), text: format!("post {i}"), post_time: post_s, last_activity_time: fmt(last), site: "s".into() }
        })
        .collect();
    let out = build_split(&records, &SplitPolicy::default()).unwrap();
    let mut ids: Vec<&str> = out
        .samples
        .iter()
        .map(|s| s.id.as_str())
        .chain(out.excluded.iter().map(String::as_str))
        .chain(out.rejected.iter().map(|r| r.id.as_str()))
        .collect();
    let landed = ids.len();
    ids.sort();
    ids.dedup();
    let partition = landed == records.len() && ids.len() == records.len();

    let texts = ["the cat sat on the mat", "a", "Is it possible for me to do my M.Tech. and then pursue it?"];
    let self_one = texts.iter().all(|t| bleu(t, t) == 1.0);
    let pairs = vec![
        ParaphrasePair { id: "same".into(), ori: texts[0].into(), syn: texts[0].into() },
        ParaphrasePair { id: "disjoint".into(), ori: texts[0].into(), syn: "one two three four five six".into() },
    ];
    let gate = paraphrase_gate(&pairs, GATE_THRESHOLD);
    let gate_ok = gate.decisions[0].accepted && !gate.decisions[1].accepted;

    let rewrites = paraphrase_gate(&example_rewrites(), GATE_THRESHOLD);
    for d in &rewrites.decisions {
        println!("    gate {}: bleu {:.4} -> {}", d.id, d.bleu, if d.accepted { "accepted" } else { "rejected" });
    }
    Outcome {
        pass: partition && self_one && gate_ok && rewrites.decisions.len() == 5,
        detail: format!(
            "{} members / {} non-members / {} excluded / {} rejected, partition {partition}; bleu(x,x)=1 {self_one}; gate {gate_ok}; {}/5 bundled rewrites accepted",
            out.count(Label::Member),
            out.count(Label::Nonmember),
            out.excluded.len(),
            out.rejected.len(),
            rewrites.accepted_count()
        ),
    }
}

fn main() {
    let results = [
        check("polarized-distance oracle", Duration::from_secs(5), polarized_oracle),
        check("baseline identities", Duration::from_secs(1), baseline_identities),
        check("auc oracle", Duration::from_secs(10), auc_oracle),
        check("tracker exactness", Duration::from_secs(30), tracker_exactness),
        check("synthetic headline ordering", Duration::from_secs(120), headline_ordering),
        check("threshold stability", Duration::from_secs(60), threshold_stability_check),
        check("augmentation properties", Duration::from_secs(60), augmentation_properties),
        check("bench pipeline", Duration::from_secs(60), bench_pipeline),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} primary criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
