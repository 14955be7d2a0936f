use std::collections::{BTreeSet, HashMap};

use serde::Deserialize;

use pacmia::io::{read_jsonl_file, write_jsonl_file};
use pacmia::{Error, Method, MethodParams, Sample, ScoreRecord, Scorer};

use super::read_samples;
use crate::args::{ScoreArgs, SpanMode};
use crate::error::{is_backend_failure, CliError, CliResult};
use crate::manifest::{manifest_path_for, RunRecorder};
use crate::provider;

#[derive(Deserialize)]
struct NeighborRow {
    id: String,
    neighbors: Vec<String>,
}

/// Falls back to the dataset's own words when no list is given.
fn corpus_words(samples: &[Sample]) -> Vec<String> {
    let words: BTreeSet<&str> = samples.iter().flat_map(|s| s.text.split_whitespace()).collect();
    words.into_iter().map(str::to_owned).collect()
}

pub fn run(args: &ScoreArgs, rec: &mut RunRecorder) -> CliResult<()> {
    rec.seed(args.seed);
    let detector = args.detector.config(args.seed);
    detector.validate()?;
    let backends = provider::build(&args.backend, args.seed)?;
    rec.backend(backends.identity.clone());
    let samples = match &args.data {
        Some(path) => read_samples(path, rec)?,
        None => backends
            .testbed_samples
            .clone()
            .ok_or_else(|| CliError::input("--data is required unless --backend synthetic"))?,
    };

    let m = &args.method;
    let params = MethodParams {
        mink_k: m.k,
        neighbor_count: m.neighbor_count,
        neighbor_ratio: m.neighbor_ratio,
        span_only: m.span == SpanMode::Output,
    };
    let mut scorer = Scorer::new(backends.target.as_ref(), detector).with_params(params);
    if let Some(r) = &backends.reference {
        scorer = scorer.with_reference(r.as_ref());
    }
    if m.methods.contains(&Method::Neighbor) {
        if let Some(path) = &m.neighbors {
            rec.dataset(path)?;
            let rows: Vec<NeighborRow> = read_jsonl_file(path)?;
            scorer.neighbors = rows.into_iter().map(|r| (r.id, r.neighbors)).collect::<HashMap<_, _>>();
        }
        scorer.neighbor_vocab = match (&m.neighbor_vocab, &backends.neighbor_vocab) {
            (Some(path), _) => {
                rec.dataset(path)?;
                std::fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()).map(str::to_owned).collect()
            }
            (None, Some(v)) => v.clone(),
            (None, None) => corpus_words(&samples),
        };
    }

    let mut records: Vec<ScoreRecord> = Vec::new();
    let mut failures: Vec<Error> = Vec::new();
    for &method in &m.methods {
        for (sample, result) in samples.iter().zip(scorer.score_all(method, &samples)) {
            match result {
                Ok(r) => {
                    if let Some(w) = &r.warning {
                        log::warn!("{} {}: {w}", method.as_str(), sample.id);
                    }
                    records.push(r);
                }
                Err(e) => {
                    let e = e.with_sample(&sample.id);
                    eprintln!("{} {}: {e}", method.as_str(), sample.id);
                    failures.push(e);
                }
            }
        }
    }
    write_jsonl_file(&args.out, &records)?;
    rec.output(&args.out);
    rec.queries(backends.counts.snapshot());
    eprintln!("wrote {} score records to {}", records.len(), args.out.display());
    if !failures.is_empty() {
        rec.note(format!("{} scorings failed", failures.len()));
    }
    let backend_failed = failures.iter().any(is_backend_failure);
    rec.write_to(manifest_path_for(&args.out));
    match failures.first() {
        None => Ok(()),
        Some(first) => {
            let msg = format!("{} of {} scorings failed; first: {first}", failures.len(), failures.len() + records.len());
            Err(if backend_failed { CliError::Backend(msg) } else { CliError::Input(msg) })
        }
    }
}
