use pacmia::backend::{text_hash, CachingProvider, ReplayProvider, ReplayRecord};
use pacmia::io::{read_jsonl_file, write_jsonl_file};
use pacmia::{DetectorConfig, LogProbProvider, Method, ScoreRecord, Scorer, Testbed, TestbedConfig};

fn small() -> Testbed {
    Testbed::build(TestbedConfig { vocab_size: 300, members: 6, nonmembers: 6, ..Default::default() }).unwrap()
}

#[test]
fn cached_scorings_replay_to_identical_scores() {
    let tb = small();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.replay.jsonl");
    let cached = CachingProvider::new(&tb.target).persist_to(&path).unwrap();
    let live = Scorer::new(&cached, DetectorConfig::default());
    let methods = [Method::Ppl, Method::Zlib, Method::Lower, Method::Mink];
    let first: Vec<Vec<ScoreRecord>> = methods
        .iter()
        .map(|&m| live.score_all(m, &tb.samples).into_iter().map(Result::unwrap).collect())
        .collect();

    // Lowercased texts are new texts, so the file holds two entries per sample
    // at most and never duplicates a hash.
    let records: Vec<ReplayRecord> = read_jsonl_file(&path).unwrap();
    let mut hashes: Vec<&str> = records.iter().map(|r| r.text_hash.as_str()).collect();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), records.len());
    assert!(records.len() <= 2 * tb.samples.len());

    let replay = ReplayProvider::load(&path).unwrap();
    let offline = Scorer::new(&replay, DetectorConfig::default());
    for (m, want) in methods.iter().zip(&first) {
        for (s, w) in tb.samples.iter().zip(want) {
            assert_eq!(offline.score(*m, s).unwrap().score, w.score, "{m:?} {}", s.id);
        }
    }
}

#[test]
fn replay_miss_names_the_hash() {
    let replay = ReplayProvider::new("empty");
    let err = replay.echo_logprobs("never seen").unwrap_err();
    assert!(err.is_backend());
    assert!(err.to_string().contains(&text_hash("never seen")[..12]));
}

#[test]
fn score_records_round_trip_through_files() {
    let tb = small();
    let scorer = Scorer::new(&tb.target, DetectorConfig::default());
    let recs: Vec<ScoreRecord> = scorer.score_all(Method::Pac, &tb.samples).into_iter().map(Result::unwrap).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pac.jsonl");
    write_jsonl_file(&path, &recs).unwrap();
    let back: Vec<ScoreRecord> = read_jsonl_file(&path).unwrap();
    assert_eq!(back, recs);
}

#[test]
fn corrupt_replay_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{\"text_hash\":\"x\",\"tokens\":[],\"logprobs\":[]}\nnot json\n").unwrap();
    let err = ReplayProvider::load(&path).unwrap_err();
    assert!(err.to_string().contains(":2:"), "{err}");
}
