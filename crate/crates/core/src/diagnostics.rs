//! Validation diagnostics with stable machine-readable codes.
//!
//! Every structural problem found while loading a scenario is reported as a
//! [`Diagnostic`] rather than a bare string, so callers (the CLI, bindings)
//! can match on the code without parsing prose.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Stable diagnostic codes. The string form is part of the CLI contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagCode {
    Parse,
    Io,
    DupId,
    UnknownRegion,
    UnknownLocation,
    UnknownModel,
    UnknownNamespace,
    BadCapacity,
    BadValue,
    NeverFits,
    BadWorkload,
    BadPolicy,
    BadStorage,
    BadFault,
}

impl DiagCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagCode::Parse => "E_PARSE",
            DiagCode::Io => "E_IO",
            DiagCode::DupId => "E_DUP_ID",
            DiagCode::UnknownRegion => "E_UNKNOWN_REGION",
            DiagCode::UnknownLocation => "E_UNKNOWN_LOCATION",
            DiagCode::UnknownModel => "E_UNKNOWN_MODEL",
            DiagCode::UnknownNamespace => "E_UNKNOWN_NAMESPACE",
            DiagCode::BadCapacity => "E_BAD_CAPACITY",
            DiagCode::BadValue => "E_BAD_VALUE",
            DiagCode::NeverFits => "E_NEVER_FITS",
            DiagCode::BadWorkload => "E_BAD_WORKLOAD",
            DiagCode::BadPolicy => "E_BAD_POLICY",
            DiagCode::BadStorage => "E_BAD_STORAGE",
            DiagCode::BadFault => "E_BAD_FAULT",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One validation finding: a code, the config path it refers to, and a
/// human-readable message. `token` is an identifier that appears verbatim in
/// the source document and can be used to anchor the finding to a line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub path: String,
    pub message: String,
    pub token: Option<String>,
    /// Line number when already known (parse errors); otherwise anchored
    /// lazily via [`line_of`].
    pub line: Option<usize>,
}

impl Diagnostic {
    pub fn new(code: DiagCode, path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            path: path.into(),
            message: message.into(),
            token: None,
            line: None,
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn with_line(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.code, self.path, self.message)
    }
}

/// Best-effort line anchor: 1-based line of the first occurrence of the
/// quoted token in the raw document.
pub fn line_of(raw: &str, token: &str) -> Option<usize> {
    let needle = format!("\"{token}\"");
    let idx = raw.find(&needle)?;
    Some(raw[..idx].bytes().filter(|b| *b == b'\n').count() + 1)
}
