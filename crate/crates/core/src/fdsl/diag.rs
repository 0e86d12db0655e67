use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagCode {
    Lexical,
    Syntax,
    Type,
    UnknownField,
    UnknownAggregator,
    UnknownCategory,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Lexical => "lexical",
            DiagCode::Syntax => "syntax",
            DiagCode::Type => "type",
            DiagCode::UnknownField => "unknown-field",
            DiagCode::UnknownAggregator => "unknown-aggregator",
            DiagCode::UnknownCategory => "unknown-category",
        }
    }
}

/// A parse or type error, formatted for verbatim inclusion in a repair prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub offset: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expected: Vec<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, offset: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            offset,
            expected: Vec::new(),
            message: message.into(),
        }
    }

    pub fn expecting(mut self, expected: &[&str]) -> Self {
        self.expected = expected.iter().map(|s| s.to_string()).collect();
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error at byte {}: {}", self.code.as_str(), self.offset, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostic {}
