use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;

use pacmia::bench::{
    balance_by_length, build_split, example_rewrites, paraphrase_gate, parse_time, read_raw_records, BenchRow,
    ParaphrasePair, PreFilter, SplitPolicy,
};
use pacmia::eval::format_table;
use pacmia::io::{read_jsonl_file, write_jsonl_file};
use pacmia::Label;

use crate::args::{BenchBuildArgs, BenchGateArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, RunRecorder};

pub fn build(args: &BenchBuildArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let policy = SplitPolicy {
        member_cutoff: parse_time(&args.member_cutoff)?,
        nonmember_start: parse_time(&args.nonmember_start)?,
    };
    policy.validate()?;
    let mut filter = PreFilter { strip_html: args.strip_html, dedup: args.dedup, exclude: None };
    if let Some(p) = &args.exclude {
        filter = filter.exclude_pattern(p)?;
    }

    rec.dataset(&args.input)?;
    let file = File::open(&args.input).map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;
    let (raw, mut rejected) = read_raw_records(BufReader::new(file))?;
    let read = raw.len() + rejected.len();
    let (kept, filtered) = filter.apply(raw);
    rejected.extend(filtered);
    let split = build_split(&kept, &policy)?;
    rejected.extend(split.rejected.iter().cloned());
    let samples = if args.balance { balance_by_length(split.samples) } else { split.samples };
    let rows: Vec<BenchRow> = samples.iter().filter_map(BenchRow::from_sample).collect();

    write_jsonl_file(&args.out, &rows)?;
    rec.output(&args.out);
    if !rejected.is_empty() {
        let path = args.out.with_extension("rejected.jsonl");
        write_jsonl_file(&path, &rejected)?;
        rec.output(&path);
    }
    rec.write_to(manifest_path_for(&args.out));

    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in &rows {
        let key = r.bucket.map_or("none".to_string(), |b| b.to_string());
        let c = counts.entry(key).or_default();
        match r.label {
            Label::Member => c.0 += 1,
            Label::Nonmember => c.1 += 1,
        }
    }
    let table: Vec<Vec<String>> =
        counts.iter().map(|(b, (m, n))| vec![b.clone(), m.to_string(), n.to_string()]).collect();
    print!("{}", format_table(&["bucket", "members", "nonmembers"], &table));
    println!(
        "{read} read, {} written, {} between the cutoffs, {} rejected",
        rows.len(),
        split.excluded.len(),
        rejected.len()
    );
    Ok(())
}

pub fn gate(args: &BenchGateArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let pairs: Vec<ParaphrasePair> = match &args.pairs {
        Some(path) => {
            rec.dataset(path)?;
            read_jsonl_file(path)?
        }
        None => example_rewrites(),
    };
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::input("--threshold must be in [0, 1]"));
    }
    let report = paraphrase_gate(&pairs, args.threshold);
    let rows: Vec<Vec<String>> = report
        .decisions
        .iter()
        .map(|d| {
            vec![
                d.id.clone(),
                format!("{:.4}", d.bleu),
                if d.accepted { "accept" } else { "reject" }.to_string(),
            ]
        })
        .collect();
    print!("{}", format_table(&["id", "bleu", "decision"], &rows));
    println!("{}/{} pairs above {}", report.accepted_count(), pairs.len(), args.threshold);
    if let Some(path) = &args.out {
        let accepted: Vec<&ParaphrasePair> = report.accepted(&pairs);
        write_jsonl_file(path, &accepted)?;
        rec.output(path);
        let decisions = path.with_extension("decisions.jsonl");
        write_jsonl_file(&decisions, &report.decisions)?;
        rec.output(&decisions);
        rec.write_to(manifest_path_for(path));
    }
    Ok(())
}
