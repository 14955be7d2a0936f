pub mod bench;
pub mod demo;
pub mod report;
pub mod score;
pub mod track;

use std::path::Path;

use pacmia::io::read_jsonl_file;
use pacmia::{Sample, ScoreRecord};

use crate::error::{CliError, CliResult};
use crate::manifest::RunRecorder;

pub fn read_samples(path: &Path, rec: &mut RunRecorder) -> CliResult<Vec<Sample>> {
    rec.dataset(path)?;
    let samples: Vec<Sample> = read_jsonl_file(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    for s in &samples {
        s.validate()?;
    }
    if samples.is_empty() {
        return Err(CliError::input(format!("{} holds no samples", path.display())));
    }
    Ok(samples)
}

pub fn read_scores(paths: &[std::path::PathBuf], rec: &mut RunRecorder) -> CliResult<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for path in paths {
        rec.dataset(path)?;
        let recs: Vec<ScoreRecord> =
            read_jsonl_file(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        out.extend(recs);
    }
    Ok(out)
}

pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}
