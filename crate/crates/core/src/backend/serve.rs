//! A loopback completions endpoint over any provider, for integration
//! tests of the HTTP client.
//!
//! Speaks just enough HTTP/1.1 for one request per connection:
//! `POST {prefix}/completions` and `GET {prefix}/health`.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Map, Value};

use super::{BiasMap, LogProbProvider};
use crate::error::{Error, Result};
use crate::types::TokenId;

pub struct LoopbackServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    served: Arc<AtomicU64>,
    handle: Option<JoinHandle<()>>,
}

impl LoopbackServer {
    /// Binds 127.0.0.1 on an ephemeral port and serves `provider` until
    /// dropped. `api_key`, when set, must arrive as a bearer token.
    pub fn start(provider: Arc<dyn LogProbProvider>, api_key: Option<String>) -> Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let served = Arc::new(AtomicU64::new(0));
        let (stop2, served2) = (stop.clone(), served.clone());
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let provider = provider.clone();
                let key = api_key.clone();
                let served = served2.clone();
                std::thread::spawn(move || {
                    if handle_conn(stream, provider.as_ref(), key.as_deref()).is_ok() {
                        served.fetch_add(1, Ordering::Relaxed);
                    }
                });
            }
        });
        Ok(Self { addr, stop, served, handle: Some(handle) })
    }

    /// Base URL including the `/v1` prefix.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn requests_served(&self) -> u64 {
        self.served.load(Ordering::Relaxed)
    }
}

impl Drop for LoopbackServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_conn(stream: TcpStream, provider: &dyn LogProbProvider, api_key: Option<&str>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();

    let mut content_length = 0usize;
    let mut bearer = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let value = value.trim();
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => bearer = value.strip_prefix("Bearer ").map(str::to_owned),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let (code, payload) = if api_key.is_some() && bearer.as_deref() != api_key {
        (401, error_body("missing or wrong bearer token"))
    } else if method == "GET" && path.ends_with("/health") {
        (200, json!({"status": "ok", "model": provider.model_id()}))
    } else if method == "POST" && path.ends_with("/completions") {
        match serde_json::from_slice::<Value>(&body) {
            Ok(req) => match complete(provider, &req) {
                Ok(v) => (200, v),
                Err(e) if e.is_backend() => (500, error_body(&e.to_string())),
                Err(e) => (400, error_body(&e.to_string())),
            },
            Err(e) => (400, error_body(&format!("malformed JSON: {e}"))),
        }
    } else {
        (404, error_body("not found"))
    };
    write_response(stream, code, &payload)
}

fn error_body(msg: &str) -> Value {
    json!({"error": {"message": msg}})
}

fn write_response(mut stream: TcpStream, code: u16, payload: &Value) -> std::io::Result<()> {
    let body = payload.to_string();
    let reason = match code {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        _ => "Internal Server Error",
    };
    write!(
        stream,
        "HTTP/1.1 {code} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}

fn complete(provider: &dyn LogProbProvider, req: &Value) -> Result<Value> {
    let echo = req.get("echo").and_then(Value::as_bool).unwrap_or(false);
    let max_tokens = req.get("max_tokens").and_then(Value::as_u64).unwrap_or(16);
    let n = req.get("logprobs").and_then(Value::as_u64).unwrap_or(0) as usize;
    if echo && max_tokens == 0 {
        let text = req
            .get("prompt")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidInput("echo scoring needs a string prompt".into()))?;
        return echo_response(provider, text);
    }
    if max_tokens != 1 || n == 0 {
        return Err(Error::InvalidInput("only echo scoring or one-token top-n probes are served".into()));
    }
    let prefix: Vec<TokenId> = match req.get("prompt") {
        Some(Value::Array(ids)) => ids
            .iter()
            .map(|v| v.as_u64().map(|x| x as TokenId))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::InvalidInput("prompt ids must be non-negative integers".into()))?,
        Some(Value::String(s)) => provider.tokenize(s)?.into_iter().map(|t| t.id).collect(),
        _ => return Err(Error::InvalidInput("missing prompt".into())),
    };
    let mut bias = BiasMap::new();
    if let Some(map) = req.get("logit_bias").and_then(Value::as_object) {
        for (k, v) in map {
            let id: TokenId = k
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bias key {k:?} is not a token id")))?;
            let b = v
                .as_f64()
                .ok_or_else(|| Error::InvalidInput(format!("bias for {k} is not a number")))?;
            bias.insert(id, b);
        }
    }
    let resp = provider.topn(&prefix, n, &bias)?;
    let name = |id: TokenId| provider.token_str(id).ok_or(Error::InvalidToken(id));
    let mut top = Map::new();
    for &(id, lp) in &resp.entries {
        top.insert(name(id)?, json!(lp));
    }
    let (_, first_lp) = resp.top().ok_or_else(|| Error::backend("empty top-n"))?;
    Ok(json!({
        "object": "text_completion",
        "model": provider.model_id(),
        "choices": [{
            "index": 0,
            "text": name(resp.echo_token)?,
            "logprobs": {
                "tokens": [name(resp.echo_token)?],
                "token_logprobs": [resp.logprob_of(resp.echo_token).unwrap_or(first_lp)],
                "top_logprobs": [top],
                "text_offset": [0],
            },
            "finish_reason": "length",
        }],
    }))
}

fn echo_response(provider: &dyn LogProbProvider, text: &str) -> Result<Value> {
    let toks = provider.tokenize(text)?;
    let st = provider.echo_logprobs(text)?;
    let mut lps = vec![Value::Null];
    lps.extend(st.logprobs.iter().map(|&lp| json!(lp)));
    Ok(json!({
        "object": "text_completion",
        "model": provider.model_id(),
        "choices": [{
            "index": 0,
            "text": text,
            "logprobs": {
                "tokens": toks.iter().map(|t| t.text.clone()).collect::<Vec<_>>(),
                "token_logprobs": lps,
                "text_offset": toks.iter().map(|t| t.offset.start).collect::<Vec<_>>(),
            },
            "finish_reason": "length",
        }],
    }))
}
