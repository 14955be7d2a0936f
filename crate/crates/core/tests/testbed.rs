use pacmia::testbed::TestbedRun;
use pacmia::{DetectorConfig, Method, Sample, Testbed, TestbedConfig};
use std::sync::OnceLock;

fn default_run() -> &'static (Vec<Sample>, TestbedRun) {
    static RUN: OnceLock<(Vec<Sample>, TestbedRun)> = OnceLock::new();
    RUN.get_or_init(|| {
        let tb = Testbed::build(TestbedConfig::default()).unwrap();
        let run = tb.run(&DetectorConfig::default(), &Method::ALL).unwrap();
        (tb.samples, run)
    })
}

// Values from the first run on the default testbed. Each AUC is a count of
// ordered pairs over 40000, so equality is exact.
#[test]
fn auc_values_are_pinned() {
    let (_, run) = default_run();
    let expected = [
        (Method::Pac, 1.0),
        (Method::Ppl, 0.9883),
        (Method::Zlib, 0.6513),
        (Method::Lower, 0.982975),
        (Method::Ref, 1.0),
        (Method::Neighbor, 0.854125),
        (Method::Mink, 0.49745),
    ];
    for (m, want) in expected {
        assert_eq!(run.auc[&m], want, "{m:?}");
    }
}

#[test]
fn members_score_higher_on_average() {
    let (samples, run) = default_run();
    for m in [Method::Pac, Method::Ppl, Method::Mink] {
        let (mem, non) = run.mean_by_label(samples, m).unwrap();
        assert!(mem > non, "{m:?}: member mean {mem} <= non-member mean {non}");
    }
}

#[test]
fn pac_beats_perplexity() {
    let (_, run) = default_run();
    assert!(run.auc[&Method::Pac] >= 0.8);
    assert!(run.auc[&Method::Pac] >= run.auc[&Method::Ppl]);
}

#[test]
fn one_score_per_sample_in_order() {
    let (samples, run) = default_run();
    for recs in run.scores.values() {
        assert_eq!(recs.len(), samples.len());
        assert!(recs.iter().zip(samples).all(|(r, s)| r.sample_id == s.id));
    }
}
