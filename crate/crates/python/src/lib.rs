//! Python bindings: models, scoring, the tracker and evaluation helpers.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pacmia::backend::{HttpConfig, HttpProvider, ReplayProvider};
use pacmia::bench::{self, ParaphrasePair};
use pacmia::eval::{self, DEFAULT_FRACTIONS, DEFAULT_TRIALS};
use pacmia::tokenizer::{GreedyTokenizer, Vocab, WordTokenizer};
use pacmia::{
    scoring, BiasMap, DetectorConfig, Error, Label, LabeledScores, LogProbProvider, Method, MethodParams, Sample,
    Scorer, SyntheticModel, SyntheticModelSpec, Testbed, TestbedConfig, TokenId, TrackerConfig,
};

create_exception!(pypacmia, BackendError, PyRuntimeError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Backend { .. } | Error::Unreachable { .. } | Error::Budget { .. } => BackendError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(to_py)
}

/// Deterministic memorizing language model over pseudo-words.
#[pyclass(name = "SyntheticModel", frozen)]
struct PySynthetic {
    inner: Arc<SyntheticModel>,
}

#[pymethods]
impl PySynthetic {
    #[new]
    #[pyo3(signature = (vocab_size, member_corpus = Vec::new(), lam = 0.9, seed = 0, recall_floor = 0.0, echo = true))]
    fn new(
        vocab_size: usize,
        member_corpus: Vec<Vec<TokenId>>,
        lam: f64,
        seed: u64,
        recall_floor: f64,
        echo: bool,
    ) -> PyResult<Self> {
        let spec = SyntheticModelSpec {
            recall_floor,
            ..SyntheticModelSpec::new(vocab_size, member_corpus, lam, seed)
        };
        let model = SyntheticModel::new(spec).map_err(to_py)?;
        let model = if echo { model } else { model.without_echo() };
        Ok(Self { inner: Arc::new(model) })
    }

    #[getter]
    fn model_id(&self) -> String {
        self.inner.model_id().to_string()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    /// Vocabulary as JSON (token string to id).
    fn vocab_json(&self) -> String {
        self.inner.vocab().to_json()
    }

    fn render(&self, ids: Vec<TokenId>) -> String {
        self.inner.render(&ids)
    }

    fn encode(&self, text: &str) -> PyResult<Vec<TokenId>> {
        self.inner.encode_ids(text).map_err(to_py)
    }

    fn next_distribution(&self, prefix: Vec<TokenId>) -> PyResult<Vec<f64>> {
        self.inner.next_distribution(&prefix).map_err(to_py)
    }

    /// Exact conditional logprobs; the first token has none.
    fn sequence_logprobs(&self, ids: Vec<TokenId>) -> PyResult<Vec<f64>> {
        self.inner.sequence_logprobs_ids(&ids).map_err(to_py)
    }

    fn topn_queries(&self) -> u64 {
        self.inner.topn_queries()
    }

    fn __repr__(&self) -> String {
        format!("SyntheticModel({})", self.inner.model_id())
    }
}

/// Scorings recorded in replay files.
#[pyclass(name = "ReplayModel", frozen)]
struct PyReplay {
    inner: Arc<ReplayProvider>,
}

#[pymethods]
impl PyReplay {
    #[new]
    fn new(paths: Vec<PathBuf>) -> PyResult<Self> {
        let (first, rest) = paths
            .split_first()
            .ok_or_else(|| PyValueError::new_err("at least one replay file is needed"))?;
        let mut p = ReplayProvider::load(first).map_err(to_py)?;
        for path in rest {
            p.extend_from(path).map_err(to_py)?;
        }
        Ok(Self { inner: Arc::new(p) })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// OpenAI-compatible completions endpoint.
#[pyclass(name = "HttpModel", frozen)]
struct PyHttp {
    inner: Arc<HttpProvider>,
}

#[pymethods]
impl PyHttp {
    #[new]
    #[pyo3(signature = (base_url, model, vocab = None, word_tokenizer = false, space_marker = None, api_key = None, echo = true, parallelism = 4, max_topn = 5))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        base_url: String,
        model: String,
        vocab: Option<PathBuf>,
        word_tokenizer: bool,
        space_marker: Option<String>,
        api_key: Option<String>,
        echo: bool,
        parallelism: usize,
        max_topn: usize,
    ) -> PyResult<Self> {
        let mut cfg = HttpConfig { echo, parallelism, max_topn, ..HttpConfig::new(base_url, model) };
        if api_key.is_some() {
            cfg.api_key = api_key;
        }
        let mut p = HttpProvider::new(cfg).map_err(to_py)?;
        if let Some(path) = vocab {
            let v = Vocab::load(&path).map_err(to_py)?;
            p = if word_tokenizer {
                p.with_tokenizer(Arc::new(WordTokenizer::new(v, None).map_err(to_py)?))
            } else {
                p.with_tokenizer(Arc::new(GreedyTokenizer::new(v, space_marker.as_deref())))
            };
        }
        Ok(Self { inner: Arc::new(p) })
    }

    fn requests_sent(&self) -> u64 {
        self.inner.requests_sent()
    }
}

fn provider(obj: &Bound<'_, PyAny>) -> PyResult<Arc<dyn LogProbProvider>> {
    if let Ok(m) = obj.extract::<PyRef<'_, PySynthetic>>() {
        return Ok(m.inner.clone());
    }
    if let Ok(m) = obj.extract::<PyRef<'_, PyReplay>>() {
        return Ok(m.inner.clone());
    }
    if let Ok(m) = obj.extract::<PyRef<'_, PyHttp>>() {
        return Ok(m.inner.clone());
    }
    Err(PyValueError::new_err("expected SyntheticModel, ReplayModel or HttpModel"))
}

/// Polarized augment calibration parameters.
#[pyclass(name = "DetectorConfig", from_py_object)]
#[derive(Clone)]
struct PyDetector {
    inner: DetectorConfig,
}

#[pymethods]
impl PyDetector {
    #[new]
    #[pyo3(signature = (k1 = 5.0, k2 = 30.0, m_ratio = 0.3, n_adjacent = 5, epsilon = 0.0, seed = 42))]
    fn new(k1: f64, k2: f64, m_ratio: f64, n_adjacent: usize, epsilon: f64, seed: u64) -> PyResult<Self> {
        let inner = DetectorConfig { k1, k2, m_ratio, n_adjacent, epsilon, seed };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn k1(&self) -> f64 {
        self.inner.k1
    }
    #[getter]
    fn k2(&self) -> f64 {
        self.inner.k2
    }
    #[getter]
    fn m_ratio(&self) -> f64 {
        self.inner.m_ratio
    }
    #[getter]
    fn n_adjacent(&self) -> usize {
        self.inner.n_adjacent
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "DetectorConfig(k1={}, k2={}, m_ratio={}, n_adjacent={}, epsilon={}, seed={})",
            c.k1, c.k2, c.m_ratio, c.n_adjacent, c.epsilon, c.seed
        )
    }
}

fn detector(config: Option<PyDetector>) -> DetectorConfig {
    config.map(|c| c.inner).unwrap_or_default()
}

#[pyfunction]
fn polarized_distance(logprobs: Vec<f64>, k1: f64, k2: f64) -> PyResult<f64> {
    let st = pacmia::ScoredTokens::from_logprobs(logprobs).map_err(to_py)?;
    scoring::polarized_distance(&st, k1, k2).map_err(to_py)
}

#[pyfunction]
fn mink_score(logprobs: Vec<f64>, k: f64) -> PyResult<f64> {
    let st = pacmia::ScoredTokens::from_logprobs(logprobs).map_err(to_py)?;
    scoring::mink_score(&st, k).map_err(to_py)
}

#[pyfunction]
fn ppl_score(logprobs: Vec<f64>) -> PyResult<f64> {
    let st = pacmia::ScoredTokens::from_logprobs(logprobs).map_err(to_py)?;
    Ok(scoring::ppl_score(&st))
}

/// Per-token logprobs of `text` as `(tokens, logprobs)`.
#[pyfunction]
fn echo_logprobs(py: Python<'_>, model: &Bound<'_, PyAny>, text: String) -> PyResult<(Vec<String>, Vec<f64>)> {
    let p = provider(model)?;
    let st = py.detach(|| pacmia::sequence_logprobs(p.as_ref(), &text)).map_err(to_py)?;
    Ok((st.tokens, st.logprobs))
}

/// Top-n `(token_id, logprob)` pairs after applying `bias`.
#[pyfunction]
#[pyo3(signature = (model, prefix, n = 5, bias = None))]
fn topn(
    py: Python<'_>,
    model: &Bound<'_, PyAny>,
    prefix: Vec<TokenId>,
    n: usize,
    bias: Option<HashMap<TokenId, f64>>,
) -> PyResult<Vec<(TokenId, f64)>> {
    let p = provider(model)?;
    let bias: BiasMap = bias.unwrap_or_default().into_iter().collect();
    let r = py.detach(|| p.topn(&prefix, n, &bias)).map_err(to_py)?;
    Ok(r.entries)
}

/// Scores texts with one method; returns one float per text.
#[pyfunction]
#[pyo3(signature = (model, method_name, texts, config = None, reference = None, k = 20.0, neighbor_vocab = None))]
#[allow(clippy::too_many_arguments)]
fn score(
    py: Python<'_>,
    model: &Bound<'_, PyAny>,
    method_name: &str,
    texts: Vec<String>,
    config: Option<PyDetector>,
    reference: Option<&Bound<'_, PyAny>>,
    k: f64,
    neighbor_vocab: Option<Vec<String>>,
) -> PyResult<Vec<f64>> {
    let m = method(method_name)?;
    let target = provider(model)?;
    let reference = reference.map(provider).transpose()?;
    let samples = texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| Sample::new(i.to_string(), t))
        .collect::<pacmia::Result<Vec<_>>>()
        .map_err(to_py)?;
    let det = detector(config);
    let records = py.detach(|| {
        let mut scorer = Scorer::new(target.as_ref(), det)
            .with_params(MethodParams { mink_k: k, ..MethodParams::default() })
            .with_neighbor_vocab(neighbor_vocab.unwrap_or_default());
        if let Some(r) = &reference {
            scorer = scorer.with_reference(r.as_ref());
        }
        scorer.score_all(m, &samples).into_iter().collect::<pacmia::Result<Vec<_>>>()
    });
    Ok(records.map_err(to_py)?.into_iter().map(|r| r.score).collect())
}

#[pyfunction]
#[pyo3(signature = (model, text, config = None))]
fn pac_score(py: Python<'_>, model: &Bound<'_, PyAny>, text: String, config: Option<PyDetector>) -> PyResult<f64> {
    let p = provider(model)?;
    let sample = Sample::new("0", text).map_err(to_py)?;
    let det = detector(config);
    let rec = py.detach(|| pacmia::pac_score(&sample, p.as_ref(), &det)).map_err(to_py)?;
    Ok(rec.score)
}

fn tracker_config(tol: f64, topn: usize, bias_lo: f64, bias_hi: f64, max_queries: usize) -> PyResult<TrackerConfig> {
    let cfg = TrackerConfig { bias_lo, bias_hi, tol, topn, max_queries_per_token: max_queries };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Logprob of `target` after `prefix` through top-n probes only.
#[pyfunction]
#[pyo3(signature = (model, prefix, target, tol = 0.01, topn = 5, bias_lo = -100.0, bias_hi = 100.0, max_queries = 64))]
#[allow(clippy::too_many_arguments)]
fn recover_token_logprob<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    prefix: Vec<TokenId>,
    target: TokenId,
    tol: f64,
    topn: usize,
    bias_lo: f64,
    bias_hi: f64,
    max_queries: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = provider(model)?;
    let cfg = tracker_config(tol, topn, bias_lo, bias_hi, max_queries)?;
    let r = py.detach(|| pacmia::recover_token_logprob(p.as_ref(), &prefix, target, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("logprob", r.logprob)?;
    d.set_item("queries", r.queries)?;
    d.set_item("bias_queries", r.bias_queries)?;
    d.set_item("gamma", r.gamma)?;
    Ok(d)
}

/// Recovers every position of `text`; holes come back as `None`.
#[pyfunction]
#[pyo3(signature = (model, text, tol = 0.01, topn = 5, bias_lo = -100.0, bias_hi = 100.0, max_queries = 64))]
#[allow(clippy::too_many_arguments)]
fn recover_sequence<'py>(
    py: Python<'py>,
    model: &Bound<'py, PyAny>,
    text: String,
    tol: f64,
    topn: usize,
    bias_lo: f64,
    bias_hi: f64,
    max_queries: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let p = provider(model)?;
    let cfg = tracker_config(tol, topn, bias_lo, bias_hi, max_queries)?;
    let r = py.detach(|| pacmia::recover_sequence_logprobs(p.as_ref(), &text, &cfg)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("tokens", r.tokens)?;
    d.set_item("logprobs", r.logprobs)?;
    d.set_item("holes", r.holes)?;
    d.set_item("queries", r.queries.total)?;
    Ok(d)
}

fn labeled(members: Vec<f64>, nonmembers: Vec<f64>) -> LabeledScores {
    LabeledScores::new(members, nonmembers)
}

#[pyfunction]
fn auc(members: Vec<f64>, nonmembers: Vec<f64>) -> PyResult<f64> {
    pacmia::auc(&labeled(members, nonmembers)).map_err(to_py)
}

/// ROC points as `(fpr, tpr, threshold)`.
#[pyfunction]
fn roc_curve(members: Vec<f64>, nonmembers: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let pts = pacmia::roc_curve(&labeled(members, nonmembers)).map_err(to_py)?;
    Ok(pts.into_iter().map(|p| (p.fpr, p.tpr, p.threshold)).collect())
}

#[pyfunction]
fn f1_max_threshold<'py>(py: Python<'py>, members: Vec<f64>, nonmembers: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = eval::f1_max_threshold(&labeled(members, nonmembers)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("epsilon", r.epsilon)?;
    d.set_item("f1", r.f1)?;
    d.set_item("accuracy", r.accuracy)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (members, nonmembers, fractions = None, trials = DEFAULT_TRIALS, seed = 42))]
fn threshold_stability<'py>(
    py: Python<'py>,
    members: Vec<f64>,
    nonmembers: Vec<f64>,
    fractions: Option<Vec<f64>>,
    trials: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let fr = fractions.unwrap_or_else(|| DEFAULT_FRACTIONS.to_vec());
    let ls = labeled(members, nonmembers);
    let s = py.detach(|| eval::threshold_stability(&ls, &fr, trials, seed)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("full_epsilon", s.full.epsilon)?;
    d.set_item("full_accuracy", s.full.accuracy)?;
    d.set_item("epsilon_std", s.epsilon_std)?;
    d.set_item("mean_accuracy", s.mean_accuracy)?;
    let rows: Vec<(f64, f64, f64, f64, f64)> = s
        .per_fraction
        .iter()
        .map(|f| (f.fraction, f.mean_accuracy, f.min_accuracy, f.epsilon_mean, f.epsilon_std))
        .collect();
    d.set_item("per_fraction", rows)?;
    Ok(d)
}

#[pyfunction]
fn bleu(candidate: &str, reference: &str) -> f64 {
    bench::bleu(candidate, reference)
}

/// `(id, bleu, accepted)` for each `(id, ori, syn)` pair.
#[pyfunction]
#[pyo3(signature = (pairs, threshold = bench::GATE_THRESHOLD))]
fn paraphrase_gate(pairs: Vec<(String, String, String)>, threshold: f64) -> Vec<(String, f64, bool)> {
    let pairs: Vec<ParaphrasePair> =
        pairs.into_iter().map(|(id, ori, syn)| ParaphrasePair { id, ori, syn }).collect();
    bench::paraphrase_gate(&pairs, threshold)
        .decisions
        .into_iter()
        .map(|d| (d.id, d.bleu, d.accepted))
        .collect()
}

/// Synthetic membership benchmark with a memorizing target and a clean
/// reference model.
#[pyclass(name = "Testbed", frozen)]
struct PyTestbed {
    config: TestbedConfig,
    target: Arc<SyntheticModel>,
    reference: Arc<SyntheticModel>,
    samples: Vec<Sample>,
    neighbor_vocab: Vec<String>,
}

#[pymethods]
impl PyTestbed {
    #[new]
    #[pyo3(signature = (seed = 42, vocab_size = 1000, lam = 0.9, members = 200, nonmembers = 200, recall_floor = 0.01))]
    fn new(seed: u64, vocab_size: usize, lam: f64, members: usize, nonmembers: usize, recall_floor: f64) -> PyResult<Self> {
        let config = TestbedConfig {
            seed,
            vocab_size,
            lambda: lam,
            members,
            nonmembers,
            recall_floor,
            ..TestbedConfig::default()
        };
        let tb = Testbed::build(config).map_err(to_py)?;
        let neighbor_vocab = tb.neighbor_vocab();
        let Testbed { config, target, reference, samples } = tb;
        Ok(Self { config, target: Arc::new(target), reference: Arc::new(reference), samples, neighbor_vocab })
    }

    #[getter]
    fn target(&self) -> PySynthetic {
        PySynthetic { inner: self.target.clone() }
    }

    #[getter]
    fn reference(&self) -> PySynthetic {
        PySynthetic { inner: self.reference.clone() }
    }

    /// `(id, text, is_member)` triples.
    #[getter]
    fn samples(&self) -> Vec<(String, String, bool)> {
        self.samples
            .iter()
            .map(|s| (s.id.clone(), s.text.clone(), s.label == Some(Label::Member)))
            .collect()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.config.seed
    }

    /// AUC per method name.
    #[pyo3(signature = (methods = None, config = None))]
    fn run(&self, py: Python<'_>, methods: Option<Vec<String>>, config: Option<PyDetector>) -> PyResult<BTreeMap<String, f64>> {
        let methods: Vec<Method> = match methods {
            Some(names) => names.iter().map(|n| method(n)).collect::<PyResult<_>>()?,
            None => Method::ALL.to_vec(),
        };
        let det = detector(config);
        let out = py.detach(|| -> pacmia::Result<BTreeMap<String, f64>> {
            let scorer = Scorer::new(self.target.as_ref(), det)
                .with_reference(self.reference.as_ref())
                .with_neighbor_vocab(self.neighbor_vocab.clone());
            let mut out = BTreeMap::new();
            for m in methods {
                let recs = scorer.score_all(m, &self.samples).into_iter().collect::<pacmia::Result<Vec<_>>>()?;
                out.insert(m.as_str().to_string(), pacmia::auc(&pacmia::testbed::labeled(&self.samples, &recs))?);
            }
            Ok(out)
        });
        out.map_err(to_py)
    }
}

#[pymodule]
fn pypacmia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("BackendError", m.py().get_type::<BackendError>())?;
    m.add_class::<PySynthetic>()?;
    m.add_class::<PyReplay>()?;
    m.add_class::<PyHttp>()?;
    m.add_class::<PyDetector>()?;
    m.add_class::<PyTestbed>()?;
    for f in [
        wrap_pyfunction!(polarized_distance, m)?,
        wrap_pyfunction!(mink_score, m)?,
        wrap_pyfunction!(ppl_score, m)?,
        wrap_pyfunction!(echo_logprobs, m)?,
        wrap_pyfunction!(topn, m)?,
        wrap_pyfunction!(score, m)?,
        wrap_pyfunction!(pac_score, m)?,
        wrap_pyfunction!(recover_token_logprob, m)?,
        wrap_pyfunction!(recover_sequence, m)?,
        wrap_pyfunction!(auc, m)?,
        wrap_pyfunction!(roc_curve, m)?,
        wrap_pyfunction!(f1_max_threshold, m)?,
        wrap_pyfunction!(threshold_stability, m)?,
        wrap_pyfunction!(bleu, m)?,
        wrap_pyfunction!(paraphrase_gate, m)?,
    ] {
        m.add_function(f)?;
    }
    Ok(())
}
