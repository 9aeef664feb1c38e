use std::fmt;

use serde::Serialize;

use crate::ast::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// A located message about a source file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SourceDiagnostic {
    pub severity: Severity,
    pub message: String,
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

impl SourceDiagnostic {
    pub fn error(message: impl Into<String>, span: Span) -> Self {
        // Zero-width spans are widened so every diagnostic covers a character.
        let end = if span.end > span.start {
            span.end
        } else {
            span.start + 1
        };
        SourceDiagnostic {
            severity: Severity::Error,
            message: message.into(),
            line: span.line.max(1),
            col: span.col.max(1),
            start: span.start,
            end,
        }
    }
}

impl fmt::Display for SourceDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}: {}: {}", self.line, self.col, sev, self.message)
    }
}

/// One or more diagnostics from a failed parse or static check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostics(pub Vec<SourceDiagnostic>);

impl Diagnostics {
    pub fn single(message: impl Into<String>, span: Span) -> Self {
        Diagnostics(vec![SourceDiagnostic::error(message, span)])
    }

    pub fn first(&self) -> &SourceDiagnostic {
        &self.0[0]
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}
