use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("backend error{}: {message}", sample_suffix(.sample_id))]
    Backend {
        sample_id: Option<String>,
        message: String,
    },

    #[error("unknown token id {0}")]
    InvalidToken(u32),

    #[error("token {target} does not enter the top-{topn} even at bias {bias_hi}")]
    Unreachable { target: u32, topn: usize, bias_hi: f64 },

    #[error("query budget of {limit} exceeded for token {target}")]
    Budget { target: u32, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn sample_suffix(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" (sample {id})"),
        None => String::new(),
    }
}

impl Error {
    pub fn backend(message: impl Into<String>) -> Self {
        Error::Backend {
            sample_id: None,
            message: message.into(),
        }
    }

    /// Attaches a sample id to a backend error; other variants pass through.
    pub fn with_sample(self, id: &str) -> Self {
        match self {
            Error::Backend { message, .. } => Error::Backend {
                sample_id: Some(id.to_string()),
                message,
            },
            other => other,
        }
    }

    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend { .. })
    }
}
