//! Run manifests written next to every artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliResult;
use crate::provider::QuerySnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub backend: String,
    pub model: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHash {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Full argv; `pacmia rerun` replays it.
    pub command: Vec<String>,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub backend: Option<BackendIdentity>,
    pub datasets: Vec<DatasetHash>,
    pub outputs: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub wall_clock_secs: f64,
    pub queries: QuerySnapshot,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Collects manifest fields while a command runs.
pub struct RunRecorder {
    manifest: RunManifest,
    clock: Instant,
    path: Option<PathBuf>,
}

impl RunRecorder {
    pub fn new(argv: Vec<String>, subcommand: &str, config: serde_json::Value) -> Self {
        Self {
            manifest: RunManifest {
                tool: "pacmia".into(),
                version: env!("CARGO_PKG_VERSION").into(),
                command: argv,
                subcommand: subcommand.into(),
                config,
                seed: None,
                backend: None,
                datasets: Vec::new(),
                outputs: Vec::new(),
                started_at: Utc::now(),
                wall_clock_secs: 0.0,
                queries: QuerySnapshot::default(),
                notes: Vec::new(),
            },
            clock: Instant::now(),
            path: None,
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn backend(&mut self, id: BackendIdentity) {
        self.manifest.backend = Some(id);
    }

    pub fn dataset(&mut self, path: &Path) -> CliResult<()> {
        let bytes = std::fs::read(path)?;
        self.manifest.datasets.push(DatasetHash {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.manifest.notes.push(note.into());
    }

    pub fn queries(&mut self, q: QuerySnapshot) {
        self.manifest.queries = q;
    }

    /// Where [`finish`](Self::finish) will write; commands without
    /// artifacts leave it unset.
    pub fn write_to(&mut self, path: PathBuf) {
        self.path = Some(path);
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes the manifest if a path was set and returns it.
    pub fn finish(mut self) -> CliResult<RunManifest> {
        self.manifest.wall_clock_secs = self.clock.elapsed().as_secs_f64();
        if let Some(path) = &self.path {
            std::fs::write(path, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        }
        Ok(self.manifest)
    }
}

/// `scores.jsonl` gets `scores.manifest.json` beside it.
pub fn manifest_path_for(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn load(path: &Path) -> CliResult<RunManifest> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_path_replaces_extension() {
        assert_eq!(manifest_path_for(Path::new("out/scores.jsonl")), PathBuf::from("out/scores.manifest.json"));
        assert_eq!(manifest_path_for(Path::new("bench")), PathBuf::from("bench.manifest.json"));
    }

    #[test]
    fn finish_writes_round_trippable_json() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.jsonl");
        std::fs::write(&data, "abc").unwrap();
        let mut rec = RunRecorder::new(vec!["pacmia".into(), "demo".into()], "demo", serde_json::json!({"a": 1}));
        rec.seed(7);
        rec.dataset(&data).unwrap();
        let path = dir.path().join("m.json");
        rec.write_to(path.clone());
        let written = rec.finish().unwrap();
        assert_eq!(load(&path).unwrap(), written);
        assert_eq!(
            written.datasets[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
