//! Backend construction from flags.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use pacmia::backend::{CachingProvider, HttpConfig, HttpProvider, ReplayProvider};
use pacmia::tokenizer::{GreedyTokenizer, Token, Tokenizer, Vocab, WordTokenizer};
use pacmia::{
    BiasMap, Capabilities, LogProbProvider, Result, Sample, ScoredTokens, Testbed, TestbedConfig, TokenId,
    TopNResponse,
};

use crate::args::{BackendArgs, BackendKind, SyntheticArgs, TokenizerKind};
use crate::error::{CliError, CliResult};
use crate::manifest::BackendIdentity;

#[derive(Debug, Default)]
pub struct QueryCounts {
    echo: AtomicU64,
    topn: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QuerySnapshot {
    pub echo: u64,
    pub topn: u64,
}

impl QueryCounts {
    pub fn snapshot(&self) -> QuerySnapshot {
        QuerySnapshot {
            echo: self.echo.load(Ordering::Relaxed),
            topn: self.topn.load(Ordering::Relaxed),
        }
    }
}

/// Counts calls that reach the wrapped backend.
pub struct Counted {
    inner: Box<dyn LogProbProvider>,
    counts: Arc<QueryCounts>,
}

impl LogProbProvider for Counted {
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
        self.counts.echo.fetch_add(1, Ordering::Relaxed);
        self.inner.echo_logprobs(text)
    }

    fn topn(&self, prefix: &[TokenId], n: usize, bias: &BiasMap) -> Result<TopNResponse> {
        self.counts.topn.fetch_add(1, Ordering::Relaxed);
        self.inner.topn(prefix, n, bias)
    }

    fn token_str(&self, id: TokenId) -> Option<String> {
        self.inner.token_str(id)
    }
}

pub struct Backends {
    pub target: Box<dyn LogProbProvider>,
    pub reference: Option<Box<dyn LogProbProvider>>,
    pub counts: Arc<QueryCounts>,
    pub identity: BackendIdentity,
    /// Testbed samples and vocabulary when the backend is synthetic.
    pub testbed_samples: Option<Vec<Sample>>,
    pub neighbor_vocab: Option<Vec<String>>,
}

pub fn testbed_config(args: &SyntheticArgs, seed: u64) -> TestbedConfig {
    TestbedConfig {
        vocab_size: args.synthetic_vocab,
        lambda: args.lambda,
        seed,
        members: args.members,
        nonmembers: args.nonmembers,
        recall_floor: args.recall_floor,
        ..TestbedConfig::default()
    }
}

fn load_tokenizer(args: &BackendArgs) -> CliResult<Option<Arc<dyn Tokenizer>>> {
    let Some(path) = &args.vocab else { return Ok(None) };
    let vocab = Vocab::load(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(Some(match args.tokenizer {
        TokenizerKind::Greedy => Arc::new(GreedyTokenizer::new(vocab, args.space_marker.as_deref())),
        TokenizerKind::Word => Arc::new(WordTokenizer::new(vocab, None)?),
    }))
}

fn http(args: &BackendArgs, base_url: Option<&String>, model: Option<&String>) -> CliResult<HttpProvider> {
    let base_url = base_url.ok_or_else(|| CliError::input("--backend http needs --base-url or PAC_BASE_URL"))?;
    let model = model.ok_or_else(|| CliError::input("--backend http needs --model"))?;
    let cfg = HttpConfig {
        parallelism: args.parallelism,
        max_attempts: args.max_attempts,
        max_topn: args.max_topn,
        echo: !args.no_echo,
        ..HttpConfig::new(base_url.clone(), model.clone())
    };
    let provider = HttpProvider::new(cfg)?;
    Ok(match load_tokenizer(args)? {
        Some(t) => provider.with_tokenizer(t),
        None => provider,
    })
}

fn replay(paths: &[std::path::PathBuf]) -> CliResult<ReplayProvider> {
    let (first, rest) = paths
        .split_first()
        .ok_or_else(|| CliError::input("--backend replay needs at least one --replay file"))?;
    let mut p = ReplayProvider::load(first)?;
    for path in rest {
        p.extend_from(path)?;
    }
    Ok(p)
}

pub fn build(args: &BackendArgs, seed: u64) -> CliResult<Backends> {
    let mut testbed_samples = None;
    let mut neighbor_vocab = None;
    let (target, reference): (Box<dyn LogProbProvider>, Option<Box<dyn LogProbProvider>>) = match args.backend {
        BackendKind::Synthetic => {
            let tb = Testbed::build(testbed_config(&args.synthetic, seed))?;
            neighbor_vocab = Some(tb.neighbor_vocab());
            let Testbed { target, reference, samples, .. } = tb;
            testbed_samples = Some(samples);
            let target = if args.no_echo { target.without_echo() } else { target };
            (Box::new(target), Some(Box::new(reference)))
        }
        BackendKind::Http => {
            let target = http(args, args.base_url.as_ref(), args.model.as_ref())?;
            let reference = match (&args.ref_model, args.ref_replay.is_empty()) {
                (Some(m), _) => {
                    let url = args.ref_base_url.as_ref().or(args.base_url.as_ref());
                    Some(Box::new(http(args, url, Some(m))?) as Box<dyn LogProbProvider>)
                }
                (None, false) => Some(Box::new(replay(&args.ref_replay)?) as Box<dyn LogProbProvider>),
                (None, true) => None,
            };
            (Box::new(target), reference)
        }
        BackendKind::Replay => {
            let reference = if args.ref_replay.is_empty() {
                None
            } else {
                Some(Box::new(replay(&args.ref_replay)?) as Box<dyn LogProbProvider>)
            };
            (Box::new(replay(&args.replay)?), reference)
        }
    };
    let identity = BackendIdentity {
        backend: target.backend_id().to_string(),
        model: target.model_id().to_string(),
    };
    let counts = Arc::new(QueryCounts::default());
    let counted: Box<dyn LogProbProvider> = Box::new(Counted { inner: target, counts: counts.clone() });
    let target: Box<dyn LogProbProvider> = match &args.cache {
        Some(path) => Box::new(CachingProvider::new(counted).persist_to(path)?),
        None => counted,
    };
    Ok(Backends { target, reference, counts, identity, testbed_samples, neighbor_vocab })
}
