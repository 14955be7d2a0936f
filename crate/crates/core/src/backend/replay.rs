//! Recorded scorings, one JSON object per line:
//! `{"text_hash": "...", "tokens": [...], "logprobs": [...]}`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Capabilities, LogProbProvider};
use crate::error::{Error, Result};
use crate::tokenizer::{word_spans, Token};
use crate::types::{ScoredTokens, TokenId};

/// Hex SHA-256 of the exact text bytes.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub text_hash: String,
    pub tokens: Vec<String>,
    pub logprobs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<Range<usize>>>,
}

impl ReplayRecord {
    pub fn new(text: &str, st: &ScoredTokens) -> Self {
        ReplayRecord {
            text_hash: text_hash(text),
            tokens: st.tokens.clone(),
            logprobs: st.logprobs.clone(),
            offsets: st.offsets.clone(),
        }
    }

    pub fn to_scored(&self) -> Result<ScoredTokens> {
        let st = ScoredTokens::new(self.tokens.clone(), self.logprobs.clone())?;
        match &self.offsets {
            Some(o) => st.with_offsets(o.clone()),
            None => Ok(st),
        }
    }
}

/// Serves scorings from replay files.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    records: HashMap<String, ReplayRecord>,
    name: String,
}

impl ReplayProvider {
    pub fn new(name: impl Into<String>) -> Self {
        Self { records: HashMap::new(), name: name.into() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut provider = Self::new(path.display().to_string());
        provider.extend_from(path)?;
        Ok(provider)
    }

    pub fn extend_from(&mut self, path: &Path) -> Result<()> {
        let reader = BufReader::new(File::open(path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ReplayRecord = serde_json::from_str(&line).map_err(|e| {
                Error::InvalidInput(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            self.insert(rec);
        }
        Ok(())
    }

    pub fn insert(&mut self, rec: ReplayRecord) {
        self.records.insert(rec.text_hash.clone(), rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&ReplayRecord> {
        self.records.get(&text_hash(text))
    }
}

impl LogProbProvider for ReplayProvider {
    fn backend_id(&self) -> &str {
        "replay"
    }

    fn model_id(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            full_echo_logprobs: true,
            topn_with_bias: false,
            max_topn: 0,
            parallelism_budget: 1,
        }
    }

    /// Replay files carry no vocabulary, so tokens are whitespace words with
    /// a placeholder id.
    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        Ok(word_spans(text)
            .into_iter()
            .map(|(offset, w)| Token { id: 0, text: w.to_string(), offset })
            .collect())
    }

    fn echo_logprobs(&self, text: &str) -> Result<ScoredTokens> {
        self.get(text)
            .ok_or_else(|| Error::backend(format!("no replay record for text {}", &text_hash(text)[..12])))?
            .to_scored()
    }

    fn token_str(&self, _id: TokenId) -> Option<String> {
        None
    }
}

/// Appends replay records, flushing after every line.
pub struct ReplayWriter {
    out: Mutex<BufWriter<File>>,
}

impl ReplayWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self { out: Mutex::new(BufWriter::new(File::create(path)?)) })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { out: Mutex::new(BufWriter::new(f)) })
    }

    pub fn write(&self, text: &str, st: &ScoredTokens) -> Result<()> {
        let line = serde_json::to_string(&ReplayRecord::new(text, st))?;
        let mut out = self.out.lock().unwrap();
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }
}
