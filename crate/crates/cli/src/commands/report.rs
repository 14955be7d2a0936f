//! evaluate, calibrate and contamination.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::Serialize;

use pacmia::eval::{
    bucketed_report, contamination_rate, f1_max_threshold, format_table, roc_csv, roc_svg, threshold_stability,
    BucketReport, ContaminationReport, StabilitySummary, ThresholdReport,
};
use pacmia::{auc, roc_curve, LabeledScores, Method, Sample, ScoreRecord};

use super::{fmt4, read_samples, read_scores};
use crate::args::{CalibrateArgs, ContaminationArgs, EvaluateArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path_for, RunRecorder};

/// Score records joined to labeled samples, grouped by method.
fn join<'a>(
    samples: &'a [Sample],
    records: &[ScoreRecord],
    rec: &mut RunRecorder,
) -> BTreeMap<Method, Vec<(&'a Sample, f64)>> {
    let by_id: HashMap<&str, &Sample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut out: BTreeMap<Method, Vec<(&Sample, f64)>> = BTreeMap::new();
    let mut unmatched = 0;
    for r in records {
        match by_id.get(r.sample_id.as_str()) {
            Some(s) if s.label.is_some() => out.entry(r.method).or_default().push((s, r.score)),
            _ => unmatched += 1,
        }
    }
    if unmatched > 0 {
        log::warn!("{unmatched} score records have no labeled sample");
        rec.note(format!("{unmatched} score records without a labeled sample were skipped"));
    }
    out
}

fn labeled(items: &[(&Sample, f64)]) -> LabeledScores {
    LabeledScores::from_pairs(items.iter().filter_map(|(s, x)| s.label.map(|l| (l, *x))))
}

#[derive(Serialize)]
struct MethodReport {
    method: Method,
    members: usize,
    nonmembers: usize,
    auc: f64,
    threshold: ThresholdReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    by_length: Option<BucketReport>,
}

pub fn evaluate(args: &EvaluateArgs, rec: &mut RunRecorder) -> CliResult<()> {
    let samples = read_samples(&args.data, rec)?;
    let records = read_scores(&args.scores, rec)?;
    let mut grouped = join(&samples, &records, rec);
    if !args.methods.is_empty() {
        grouped.retain(|m, _| args.methods.contains(m));
    }
    if grouped.is_empty() {
        return Err(CliError::input("no labeled scores to evaluate"));
    }

    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for (&method, items) in &grouped {
        let ls = labeled(items);
        let a = auc(&ls)?;
        curves.push((method.as_str().to_string(), roc_curve(&ls)?));
        reports.push(MethodReport {
            method,
            members: ls.members.len(),
            nonmembers: ls.nonmembers.len(),
            auc: a,
            threshold: f1_max_threshold(&ls)?,
            by_length: args.by_length.then(|| bucketed_report(items.iter().copied())),
        });
    }

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.method.as_str().to_string(),
                r.members.to_string(),
                r.nonmembers.to_string(),
                fmt4(r.auc),
                fmt4(r.threshold.epsilon),
                fmt4(r.threshold.f1),
                fmt4(r.threshold.accuracy),
            ]
        })
        .collect();
    print!("{}", format_table(&["method", "members", "nonmembers", "auc", "epsilon", "f1", "accuracy"], &rows));

    if args.by_length {
        let mut rows = Vec::new();
        for r in &reports {
            let b = r.by_length.as_ref().expect("requested");
            for row in &b.rows {
                rows.push(vec![
                    r.method.as_str().to_string(),
                    row.bucket.to_string(),
                    row.members.to_string(),
                    row.nonmembers.to_string(),
                    row.auc.map_or("-".into(), fmt4),
                ]);
            }
            if b.unbucketed > 0 {
                log::info!("{}: {} samples outside every length bucket", r.method.as_str(), b.unbucketed);
            }
        }
        println!();
        print!("{}", format_table(&["method", "bucket", "members", "nonmembers", "auc"], &rows));
    }

    let mut artifact: Option<PathBuf> = None;
    if let Some(path) = &args.plot {
        std::fs::write(path, roc_svg(&curves))?;
        rec.output(path);
        artifact.get_or_insert(path.clone());
    }
    if let Some(dir) = &args.roc_dir {
        std::fs::create_dir_all(dir)?;
        for (name, points) in &curves {
            let path = dir.join(format!("roc_{name}.csv"));
            std::fs::write(&path, roc_csv(points))?;
            rec.output(&path);
        }
        artifact.get_or_insert(dir.join("roc"));
    }
    if let Some(path) = &args.out {
        write_json(path, &reports)?;
        rec.output(path);
        artifact = Some(path.clone());
    }
    if let Some(a) = artifact {
        rec.write_to(manifest_path_for(&a));
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs, rec: &mut RunRecorder) -> CliResult<()> {
    rec.seed(args.seed);
    let samples = read_samples(&args.data, rec)?;
    let records = read_scores(&args.scores, rec)?;
    let grouped = join(&samples, &records, rec);
    let items = grouped
        .get(&args.method)
        .ok_or_else(|| CliError::input(format!("no labeled {} scores", args.method.as_str())))?;
    let summary: StabilitySummary = threshold_stability(&labeled(items), &args.fractions, args.trials, args.seed)?;

    let rows: Vec<Vec<String>> = summary
        .per_fraction
        .iter()
        .map(|f| {
            vec![
                format!("{:.2}", f.fraction),
                fmt4(f.mean_accuracy),
                fmt4(f.min_accuracy),
                fmt4(f.epsilon_mean),
                fmt4(f.epsilon_std),
            ]
        })
        .collect();
    print!("{}", format_table(&["fraction", "mean_acc", "min_acc", "eps_mean", "eps_std"], &rows));
    println!(
        "full data: epsilon {} f1 {} accuracy {}",
        fmt4(summary.full.epsilon),
        fmt4(summary.full.f1),
        fmt4(summary.full.accuracy)
    );
    println!("epsilon std over all subsets: {}", fmt4(summary.epsilon_std));

    if let Some(path) = &args.out {
        write_json(path, &summary)?;
        rec.output(path);
        rec.write_to(manifest_path_for(path));
    }
    Ok(())
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Serialize)]
struct ContaminationRow {
    source: String,
    #[serde(flatten)]
    report: ContaminationReport,
}

pub fn contamination(args: &ContaminationArgs, rec: &mut RunRecorder) -> CliResult<()> {
    if !args.epsilon.is_finite() {
        return Err(CliError::input("--epsilon must be finite"));
    }
    let mut out = Vec::new();
    for path in &args.scores {
        let records = read_scores(std::slice::from_ref(path), rec)?;
        let scores: Vec<f64> = records.iter().filter(|r| r.method == args.method).map(|r| r.score).collect();
        let report = contamination_rate(&scores, args.epsilon)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        out.push(ContaminationRow { source: stem(path), report });
    }
    // Full paths only when two files would otherwise share a row label.
    let mut seen = std::collections::HashSet::new();
    if !out.iter().all(|r| seen.insert(r.source.clone())) {
        for (r, path) in out.iter_mut().zip(&args.scores) {
            r.source = path.display().to_string();
        }
    }
    let rows: Vec<Vec<String>> = out
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                r.report.count.to_string(),
                r.report.total.to_string(),
                format!("{:.1}%", 100.0 * r.report.rate),
            ]
        })
        .collect();
    println!("method {} epsilon {}", args.method.as_str(), args.epsilon);
    print!("{}", format_table(&["source", "above", "total", "rate"], &rows));
    if let Some(path) = &args.out {
        write_json(path, &out)?;
        rec.output(path);
        rec.write_to(manifest_path_for(path));
    }
    Ok(())
}
