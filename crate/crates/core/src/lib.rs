//! Membership inference and data-contamination scoring for language models.
//!
//! The main entry point is [`pac_score`]: it compares a text's polarized
//! distance against the average over randomly word-swapped copies. Six
//! baseline scores, a logit-bias tracker for top-n-only APIs, a time-split
//! benchmark builder and ROC/AUC evaluation complete the toolkit. A
//! deterministic memorizing model ([`SyntheticModel`]) lets everything run
//! offline.

pub mod augment;
pub mod backend;
pub mod bench;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod scoring;
pub mod testbed;
pub mod tokenizer;
pub mod tracker;
pub mod types;

pub use backend::{
    sequence_logprobs, BiasMap, Capabilities, LogProbProvider, SyntheticModel, SyntheticModelSpec,
    TopNResponse,
};
pub use error::{Error, Result};
pub use eval::{auc, roc_curve, LabeledScores};
pub use pipeline::{MethodParams, Scorer};
pub use testbed::{Testbed, TestbedConfig};
pub use tracker::{recover_sequence_logprobs, recover_token_logprob, TrackerConfig};
pub use scoring::{pac_score, polarized_distance};
pub use types::{DetectorConfig, Form, Label, Method, Sample, ScoreRecord, ScoredTokens, TokenId};
