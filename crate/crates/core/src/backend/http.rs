//! OpenAI-compatible completions client.
//!
//! Echo scoring posts the full text with `max_tokens: 0, echo: true` and
//! reads `choices[0].logprobs.token_logprobs`, whose leading `null` is the
//! unscoreable first token. Top-n probes post the prefix as a token-id
//! array with `max_tokens: 1, echo: false` plus a `logit_bias` map and read
//! `choices[0].logprobs.top_logprobs[0]`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{clamp_bias, BiasMap, Capabilities, LogProbProvider, TopNResponse};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tokenizer::{Token, Tokenizer};
use crate::types::{ScoredTokens, TokenId};

pub const API_KEY_ENV: &str = "PAC_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    RateLimited,
    Status { code: u16, body: String },
    Network(String),
    Decode(String),
}

impl TransportError {
    fn retryable(&self) -> bool {
        match self {
            TransportError::RateLimited | TransportError::Network(_) => true,
            TransportError::Status { code, .. } => *code >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::RateLimited => write!(f, "rate limited (429)"),
            TransportError::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            TransportError::Network(m) => write!(f, "network: {m}"),
            TransportError::Decode(m) => write!(f, "decode: {m}"),
        }
    }
}

/// One JSON POST. Swappable so tests can record traffic.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> std::result::Result<Value, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self { agent: ureq::Agent::new_with_config(config) }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(60))
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> std::result::Result<Value, TransportError> {
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let code = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        match code {
            200..=299 => serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string())),
            429 => Err(TransportError::RateLimited),
            _ => Err(TransportError::Status { code, body: text }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base URL up to and including the API version, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub parallelism: usize,
    pub max_attempts: usize,
    pub backoff_base: Duration,
    pub max_topn: usize,
    pub echo: bool,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            parallelism: 4,
            max_attempts: 5,
            backoff_base: Duration::from_millis(500),
            max_topn: 5,
            echo: true,
        }
    }

    fn completions_url(&self) -> String {
        format!("{}/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> GatePermit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GatePermit(self)
    }
}

struct GatePermit<'a>(&'a Gate);

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpProvider {
    cfg: HttpConfig,
    transport: Arc<dyn Transport>,
    tokenizer: Option<Arc<dyn Tokenizer>>,
    gate: Gate,
    requests: AtomicU64,
    jitter: Mutex<SplitMix64>,
}

impl HttpProvider {
    pub fn new(cfg: HttpConfig) -> Result<Self> {
        Self::with_transport(cfg, Arc::new(UreqTransport::default()))
    }

    pub fn with_transport(cfg: HttpConfig, transport: Arc<dyn Transport>) -> Result<Self> {
        if cfg.parallelism == 0 || cfg.max_attempts == 0 {
            return Err(Error::InvalidConfig("parallelism and max_attempts must be positive".into()));
        }
        if !cfg.echo && cfg.max_topn == 0 {
            return Err(Error::InvalidConfig("provider needs echo or top-n access".into()));
        }
        let gate = Gate::new(cfg.parallelism);
        Ok(Self {
            cfg,
            transport,
            tokenizer: None,
            gate,
            requests: AtomicU64::new(0),
            jitter: Mutex::new(SplitMix64::new(0x5eed)),
        })
    }

    /// Local tokenizer for the remote model's vocabulary; needed for top-n
    /// probes.
    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = Some(tokenizer);
        self
    }

    /// HTTP requests sent, retries included.
    pub fn requests_sent(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn post(&self, body: &Value) -> Result<Value> {
        let url = self.cfg.completions_url();
        let mut last = None;
        for attempt in 0..self.cfg.max_attempts {
            if attempt > 0 {
                let jitter = 0.5 + self.jitter.lock().unwrap().next_f64();
                let wait = self.cfg.backoff_base.mul_f64(2f64.powi(attempt as i32 - 1) * jitter);
                std::thread::sleep(wait);
            }
            let result = {
                let _permit = self.gate.acquire();
                self.requests.fetch_add(1, Ordering::Relaxed);
                self.transport.post_json(&url, self.cfg.api_key.as_deref(), body)
            };
            match result {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() => {
                    log::warn!("request attempt {} failed: {e}", attempt + 1);
                    last = Some(e);
                }
                Err(e) => return Err(Error::backend(e.to_string())),
            }
        }
        Err(Error::backend(format!(
            "giving up after {} attempts: {}",
            self.cfg.max_attempts,
            last.map(|e| e.to_string()).unwrap_or_default()
        )))
    }

    fn tokenizer(&self) -> Result<&Arc<dyn Tokenizer>> {
        self.tokenizer
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("HTTP top-n probes need a vocabulary (--vocab)".into()))
    }
}

fn logprobs_block(resp: &Value) -> Result<&Value> {
    resp.pointer("/choices/0/logprobs")
        .filter(|v| v.is_object())
        .ok_or_else(|| Error::backend("response has no choices[0].logprobs"))
}

impl LogProbProvider for HttpProvider {
    fn backend_id(&self) -> &str {
        "http"
    }

    fn model_id(&self) -> &str {
        &self.cfg.model
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            full_echo_logprobs: self.cfg.echo,
            topn_with_bias: self.cfg.max_topn > 0,
            max_topn: self.cfg.max_topn,
            parallelism_budget: self.cfg.parallelism,
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<Token>> {
        self.tokenizer()?.encode(text)
    }

    fn echo_logprobs(&self, text: &str) -> Result<ScoredTokens> {
        let body = json!({
            "model": self.cfg.model,
            "prompt": text,
            "max_tokens": 0,
            "echo": true,
            "logprobs": 1,
            "temperature": 0,
        });
        let resp = self.post(&body)?;
        let block = logprobs_block(&resp)?;
        let tokens = block
            .get("tokens")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::backend("echo response lacks tokens"))?;
        let lps = block
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::backend("echo response lacks token_logprobs"))?;
        let offsets = block.get("text_offset").and_then(Value::as_array);
        if tokens.len() != lps.len() || tokens.len() < 2 {
            return Err(Error::backend(format!(
                "echo response has {} tokens and {} logprobs",
                tokens.len(),
                lps.len()
            )));
        }
        let mut out_tokens = Vec::new();
        let mut out_lps = Vec::new();
        for (tok, lp) in tokens.iter().zip(lps).skip(1) {
            let lp = lp
                .as_f64()
                .ok_or_else(|| Error::backend("null logprob after the first token"))?;
            out_tokens.push(tok.as_str().unwrap_or_default().to_string());
            // Servers occasionally report tiny positive values from rounding.
            out_lps.push(if lp > 0.0 && lp < 1e-6 { 0.0 } else { lp });
        }
        let st = ScoredTokens::new(out_tokens, out_lps).map_err(|e| Error::backend(e.to_string()))?;
        match offsets {
            Some(offs) if offs.len() == tokens.len() => {
                // A token spans its own characters from its reported start.
                let ranges = offs
                    .iter()
                    .zip(tokens)
                    .skip(1)
                    .map(|(o, t)| {
                        let start = o.as_u64().unwrap_or(0) as usize;
                        start..start + t.as_str().map_or(0, |t| t.chars().count())
                    })
                    .collect();
                st.with_offsets(ranges)
            }
            _ => Ok(st),
        }
    }

    fn topn(&self, prefix: &[TokenId], n: usize, bias: &BiasMap) -> Result<TopNResponse> {
        if prefix.is_empty() {
            return Err(Error::InvalidInput("top-n probe needs a non-empty prefix".into()));
        }
        let tokenizer = self.tokenizer()?;
        for &t in bias.keys().chain(prefix) {
            if tokenizer.token_str(t).is_none() {
                return Err(Error::InvalidToken(t));
            }
        }
        let logit_bias: Map<String, Value> = bias
            .iter()
            .map(|(t, b)| (t.to_string(), json!(clamp_bias(*b))))
            .collect();
        let body = json!({
            "model": self.cfg.model,
            "prompt": prefix,
            "max_tokens": 1,
            "echo": false,
            "logprobs": n.min(self.cfg.max_topn),
            "logit_bias": logit_bias,
            "temperature": 0,
        });
        let resp = self.post(&body)?;
        let block = logprobs_block(&resp)?;
        let top = block
            .pointer("/top_logprobs/0")
            .and_then(Value::as_object)
            .ok_or_else(|| Error::backend("top-n response lacks top_logprobs[0]"))?;
        let mut entries = Vec::with_capacity(top.len());
        for (tok, lp) in top {
            let id = tokenizer
                .token_id(tok)
                .ok_or_else(|| Error::backend(format!("top-n token {tok:?} not in vocabulary")))?;
            let lp = lp.as_f64().ok_or_else(|| Error::backend("non-numeric top logprob"))?;
            entries.push((id, lp));
        }
        if entries.is_empty() {
            return Err(Error::backend("empty top-n response"));
        }
        let realized = block
            .pointer("/tokens/0")
            .and_then(Value::as_str)
            .and_then(|t| tokenizer.token_id(t));
        let resp = TopNResponse::new(entries, 0);
        let echo_token = realized.unwrap_or(resp.entries[0].0);
        Ok(TopNResponse { echo_token, ..resp })
    }

    fn token_str(&self, id: TokenId) -> Option<String> {
        self.tokenizer.as_ref()?.token_str(id).map(str::to_owned)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;

    struct Recorder {
        in_flight: AtomicUsize,
        peak: AtomicUsize,
        calls: AtomicUsize,
        fail_first: usize,
        error: TransportError,
        bodies: Mutex<Vec<Value>>,
    }

    impl Recorder {
        fn new(fail_first: usize, error: TransportError) -> Self {
            Self {
                in_flight: AtomicUsize::new(0),
                peak: AtomicUsize::new(0),
                calls: AtomicUsize::new(0),
                fail_first,
                error,
                bodies: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for Recorder {
        fn post_json(&self, _url: &str, _bearer: Option<&str>, body: &Value) -> std::result::Result<Value, TransportError> {
            let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            self.bodies.lock().unwrap().push(body.clone());
            let call = self.calls.fetch_add(1, Ordering::SeqCst);
            if call < self.fail_first {
                return Err(self.error.clone());
            }
            Ok(json!({"choices": [{"logprobs": {
                "tokens": ["a", " b", " c"],
                "token_logprobs": [null, -1.5, -0.25],
                "text_offset": [0, 1, 3],
            }}]}))
        }
    }

    fn cfg() -> HttpConfig {
        HttpConfig {
            api_key: None,
            backoff_base: Duration::ZERO,
            ..HttpConfig::new("http://unused/v1", "m")
        }
    }

    #[test]
    fn echo_request_shape_and_parse() {
        let rec = Arc::new(Recorder::new(0, TransportError::RateLimited));
        let p = HttpProvider::with_transport(cfg(), rec.clone()).unwrap();
        let st = p.echo_logprobs("a b c").unwrap();
        assert_eq!(st.logprobs, vec![-1.5, -0.25]);
        assert_eq!(st.offsets, Some(vec![1..3, 3..5]));
        let body = &rec.bodies.lock().unwrap()[0];
        assert_eq!(body["max_tokens"], 0);
        assert_eq!(body["echo"], true);
        assert_eq!(body["prompt"], "a b c");
    }

    #[test]
    fn retries_are_capped() {
        let rec = Arc::new(Recorder::new(100, TransportError::RateLimited));
        let p = HttpProvider::with_transport(cfg(), rec.clone()).unwrap();
        assert!(p.echo_logprobs("a b c").unwrap_err().is_backend());
        assert_eq!(rec.calls.load(Ordering::SeqCst), 5);
        assert_eq!(p.requests_sent(), 5);
    }

    #[test]
    fn transient_failures_recover() {
        let rec = Arc::new(Recorder::new(2, TransportError::Status { code: 503, body: String::new() }));
        let p = HttpProvider::with_transport(cfg(), rec.clone()).unwrap();
        assert!(p.echo_logprobs("a b c").is_ok());
        assert_eq!(rec.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let rec = Arc::new(Recorder::new(1, TransportError::Status { code: 400, body: "bad".into() }));
        let p = HttpProvider::with_transport(cfg(), rec.clone()).unwrap();
        assert!(p.echo_logprobs("a b c").is_err());
        assert_eq!(rec.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn budget_bounds_in_flight_requests() {
        let rec = Arc::new(Recorder::new(0, TransportError::RateLimited));
        let p = HttpProvider::with_transport(HttpConfig { parallelism: 2, ..cfg() }, rec.clone()).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| p.echo_logprobs("a b c").unwrap());
            }
        });
        assert_eq!(rec.calls.load(Ordering::SeqCst), 8);
        assert!(rec.peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn topn_without_vocab_is_config_error() {
        let rec = Arc::new(Recorder::new(0, TransportError::RateLimited));
        let p = HttpProvider::with_transport(cfg(), rec).unwrap();
        assert!(matches!(p.topn(&[1], 5, &BiasMap::new()), Err(Error::InvalidConfig(_))));
    }
}
