use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{BiasMap, Capabilities, LogProbProvider, ReplayWriter, TopNResponse};
use crate::error::Result;
use crate::tokenizer::Token;
use crate::types::{ScoredTokens, TokenId};

/// Content-addressed echo-score cache in front of another provider.
///
/// Keys hash `(backend id, model id, text bytes)`. With a persistence file,
/// every new scoring is appended and flushed immediately as a replay record.
pub struct CachingProvider<P> {
    inner: P,
    cache: Mutex<HashMap<String, ScoredTokens>>,
    sink: Option<ReplayWriter>,
}

impl<P: LogProbProvider> CachingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()), sink: None }
    }

    pub fn persist_to(mut self, path: &Path) -> Result<Self> {
        self.sink = Some(ReplayWriter::append(path)?);
        Ok(self)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    fn key(&self, text: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.inner.backend_id().as_bytes());
        h.update([0]);
        h.update(self.inner.model_id().as_bytes());
        h.update([0]);
        h.update(text.as_bytes());
        hex::encode(h.finalize())
    }
}

impl<P: LogProbProvider> LogProbProvider for CachingProvider<P> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        self.inner.tokenize(text)
    }

    fn echo_logprobs(&self, text: &str) -> Result<ScoredTokens> {
        let key = self.key(text);
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let st = self.inner.echo_logprobs(text)?;
        if let Some(sink) = &self.sink {
            sink.write(text, &st)?;
        }
        self.cache.lock().unwrap().insert(key, st.clone());
        Ok(st)
    }

    fn topn(&self, prefix: &[TokenId], n: usize, bias: &BiasMap) -> Result<TopNResponse> {
        self.inner.topn(prefix, n, bias)
    }

    fn token_str(&self, id: TokenId) -> Option<String> {
        self.inner.token_str(id)
    }
}
