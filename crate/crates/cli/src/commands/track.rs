use serde::Serialize;

use pacmia::backend::ReplayWriter;
use pacmia::eval::format_table;
use pacmia::io::write_jsonl_file;
use pacmia::{recover_sequence_logprobs, TrackerConfig};

use super::read_samples;
use crate::args::TrackArgs;
use crate::error::{is_backend_failure, CliError, CliResult};
use crate::manifest::{manifest_path_for, RunRecorder};
use crate::provider;

#[derive(Serialize)]
struct HoleRow {
    id: String,
    position: usize,
    reason: String,
}

pub fn run(args: &TrackArgs, rec: &mut RunRecorder) -> CliResult<()> {
    rec.seed(args.seed);
    let cfg = TrackerConfig {
        bias_lo: args.bias_lo,
        bias_hi: args.bias_hi,
        tol: args.tol,
        topn: args.topn,
        max_queries_per_token: args.max_queries,
    };
    cfg.validate()?;
    let backends = provider::build(&args.backend, args.seed)?;
    rec.backend(backends.identity.clone());
    let target = backends.target.as_ref();
    if !target.capabilities().topn_with_bias {
        return Err(CliError::input(format!("{} backend has no top-n access", backends.identity.backend)));
    }

    let mut texts: Vec<(String, String)> = Vec::new();
    if let Some(path) = &args.data {
        texts.extend(read_samples(path, rec)?.into_iter().map(|s| (s.id, s.text)));
    }
    texts.extend(args.text.iter().enumerate().map(|(i, t)| (format!("text{i}"), t.clone())));

    let writer = ReplayWriter::create(&args.out)?;
    rec.output(&args.out);
    rec.write_to(manifest_path_for(&args.out));
    let mut holes = Vec::new();
    let mut rows = Vec::new();
    let mut worst: Option<f64> = None;
    let (mut complete, mut searched) = (0usize, 0usize);
    for (id, text) in &texts {
        let recovery = match recover_sequence_logprobs(target, text, &cfg) {
            Ok(r) => r,
            Err(e) if is_backend_failure(&e) => return Err(e.with_sample(id).into()),
            Err(e) => {
                eprintln!("{id}: {e}");
                holes.push(HoleRow { id: id.clone(), position: 0, reason: e.to_string() });
                continue;
            }
        };
        searched += recovery.queries.searched_tokens;
        let q = recovery.queries.clone();
        let n_holes = recovery.holes.len();
        for (pos, why) in &recovery.holes {
            holes.push(HoleRow { id: id.clone(), position: *pos, reason: why.clone() });
        }
        let mut err_cell = "-".to_string();
        if recovery.is_complete() {
            let scored = recovery.into_scored()?;
            if args.verify {
                // --no-echo may only hide the capability; verification still
                // works when the backend answers, and is a usage error otherwise.
                let truth = match target.echo_logprobs(text) {
                    Ok(t) => t,
                    Err(e) if !target.capabilities().full_echo_logprobs => {
                        return Err(CliError::input(format!("--verify needs echo logprobs: {e}")))
                    }
                    Err(e) => return Err(e.with_sample(id).into()),
                };
                let err = scored
                    .logprobs
                    .iter()
                    .zip(&truth.logprobs)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = Some(worst.map_or(err, |w: f64| w.max(err)));
                err_cell = format!("{err:.4}");
            }
            writer.write(text, &scored)?;
            complete += 1;
        }
        rows.push(vec![id.clone(), q.total.to_string(), q.biased.to_string(), n_holes.to_string(), err_cell]);
    }
    print!("{}", format_table(&["id", "queries", "biased", "holes", "max_err"], &rows));
    println!("{complete}/{} texts recovered, {searched} tokens needed a bias search", texts.len());
    if let Some(w) = worst {
        println!("largest error against echo: {w:.4} (tolerance {})", cfg.tol);
    }
    if !holes.is_empty() {
        let path = args.out.with_extension("holes.jsonl");
        write_jsonl_file(&path, &holes)?;
        rec.output(&path);
        rec.note(format!("{} unrecovered positions; samples with holes were not written", holes.len()));
    }
    rec.queries(backends.counts.snapshot());
    Ok(())
}
