use serde::Serialize;

/// Process exit status for a failed run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    /// A mathematical inequality or identity failed.
    Violation = 1,
    /// The input could not be parsed, validated or used.
    Input = 2,
}

/// Machine-readable error printed to stderr as a single JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, thiserror::Error)]
#[error("{category}: {message}")]
pub struct CliError {
    pub category: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(skip)]
    pub kind: ExitKind,
}

impl CliError {
    pub fn input(category: &str, message: impl Into<String>) -> Self {
        Self {
            category: category.into(),
            message: message.into(),
            path: None,
            kind: ExitKind::Input,
        }
    }

    pub fn violation(message: impl Into<String>) -> Self {
        Self {
            category: "inequality_violation".into(),
            message: message.into(),
            path: None,
            kind: ExitKind::Violation,
        }
    }

    pub fn at(mut self, path: impl Into<String>) -> Self {
        self.path = Some(path.into());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind as i32
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl From<qfluct::Error> for CliError {
    fn from(e: qfluct::Error) -> Self {
        let kind = if e.is_inequality_violation() {
            ExitKind::Violation
        } else {
            ExitKind::Input
        };
        Self {
            category: e.category().into(),
            message: e.to_string(),
            path: None,
            kind,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input("io", e.to_string())
    }
}

/// Attaches a field path to core errors.
pub trait AtPath<T> {
    fn at(self, path: &str) -> Result<T, CliError>;
}

impl<T> AtPath<T> for qfluct::Result<T> {
    fn at(self, path: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from(e).at(path))
    }
}
