use std::fmt;

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable or malformed inputs. Exit 1.
    Input(String),
    /// The model backend failed. Exit 2.
    Backend(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Backend(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

pub fn is_backend_failure(e: &pacmia::Error) -> bool {
    use pacmia::Error as E;
    matches!(e, E::Backend { .. } | E::Unreachable { .. } | E::Budget { .. })
}

impl From<pacmia::Error> for CliError {
    fn from(e: pacmia::Error) -> Self {
        if is_backend_failure(&e) {
            CliError::Backend(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
