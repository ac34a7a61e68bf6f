//! Backend-agnostic completion interface with structured-output parsing and
//! validation-driven re-prompting.
//!
//! A [`Backend`] turns a prompt into raw text; [`complete_structured`] parses
//! that text as JSON, validates it against a response schema, and re-prompts
//! with the error list until it validates or the retry budget is spent.
//! Swapping the mock, scripted, and live backends changes no type contracts.

mod jsonschema;
mod live;
pub(crate) mod mock;
pub mod prompts;
mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use jsonschema::validate_against_schema;
pub use live::LiveBackend;
pub use mock::{mock_extract, page_candidates, CandidateRow, MockBackend, PageCandidates};
pub use scripted::{RecordingBackend, ScriptedBackend, TranscriptEntry};

pub const DEFAULT_MAX_RETRIES: u32 = 3;

/// The four detection/extraction strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    RawText,
    StructuredCot,
    FullSchema,
    DirectSchema,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 4] = [
        PromptStrategy::RawText,
        PromptStrategy::StructuredCot,
        PromptStrategy::FullSchema,
        PromptStrategy::DirectSchema,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptStrategy::RawText => "raw_text",
            PromptStrategy::StructuredCot => "structured_cot",
            PromptStrategy::FullSchema => "full_schema",
            PromptStrategy::DirectSchema => "direct_schema",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_text" => Ok(PromptStrategy::RawText),
            "structured_cot" => Ok(PromptStrategy::StructuredCot),
            "full_schema" => Ok(PromptStrategy::FullSchema),
            "direct_schema" => Ok(PromptStrategy::DirectSchema),
            other => Err(format!(
                "unknown strategy {other:?}; expected raw_text, structured_cot, full_schema, \
                 or direct_schema"
            )),
        }
    }
}

/// Transport-level backend failure, distinct from validation failure and
/// retriable.
#[derive(Debug, Clone, Error)]
#[error("backend transport failure: {0}")]
pub struct BackendError(pub String);

/// A completion backend. Implementations must be safe for concurrent
/// requests from any number of workers.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;

    fn name(&self) -> &'static str {
        "backend"
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        (**self).complete(prompt)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// A structured-output request: prompt, response schema, retry budget.
#[derive(Debug, Clone)]
pub struct StructuredRequest {
    pub prompt: String,
    pub response_schema: serde_json::Value,
    pub max_retries: u32,
}

impl StructuredRequest {
    pub fn new(prompt: String, response_schema: serde_json::Value) -> Self {
        StructuredRequest {
            prompt,
            response_schema,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    /// Builds a request from schema text, rejecting invalid JSON.
    pub fn from_schema_text(prompt: String, schema_text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(prompt, serde_json::from_str(schema_text)?))
    }
}

/// Outcome of a structured completion. `parsed` is present iff the final
/// attempt validated against the response schema.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub raw: String,
    pub parsed: Option<serde_json::Value>,
    pub attempts: u32,
    pub errors_seen: Vec<String>,
}

#[derive(Debug, Error)]
pub enum LlmError {
    /// Every attempt failed at the transport level; no model output exists.
    #[error("backend unreachable after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
}

fn extract_json(raw: &str) -> Result<serde_json::Value, String> {
    if let Ok(value) = serde_json::from_str(raw.trim()) {
        return Ok(value);
    }
    // Models sometimes wrap JSON in prose; take the outermost bracketed span.
    let object_start = raw.find('{');
    let array_start = raw.find('[');
    let (start, end) = match (object_start, array_start) {
        (Some(o), Some(a)) if a < o => (a, raw.rfind(']')),
        (Some(o), _) => (o, raw.rfind('}')),
        (None, Some(a)) => (a, raw.rfind(']')),
        (None, None) => return Err("no JSON value found in output".to_string()),
    };
    match end {
        Some(end) if end > start => serde_json::from_str(&raw[start..=end])
            .map_err(|e| format!("invalid JSON: {e}")),
        _ => Err("no JSON value found in output".to_string()),
    }
}

/// Runs a structured completion with validation-driven re-prompting.
///
/// Validation failures append the error list to the prompt and retry;
/// transport failures retry the unchanged prompt. After `max_retries`
/// retries the response is returned with `parsed` absent — unless every
/// attempt died in transport, which surfaces as [`LlmError::Transport`].
pub fn complete_structured(
    backend: &dyn Backend,
    request: &StructuredRequest,
) -> Result<BackendResponse, LlmError> {
    let mut errors_seen: Vec<String> = Vec::new();
    let mut prompt = request.prompt.clone();
    let mut last_raw: Option<String> = None;
    let max_attempts = 1 + request.max_retries;
    for attempt in 1..=max_attempts {
        match backend.complete(&prompt) {
            Err(BackendError(detail)) => {
                errors_seen.push(format!("transport: {detail}"));
            }
            Ok(raw) => {
                let attempt_errors = match extract_json(&raw) {
                    Err(e) => vec![e],
                    Ok(value) => match validate_against_schema(&value, &request.response_schema) {
                        Ok(()) => {
                            return Ok(BackendResponse {
                                raw,
                                parsed: Some(value),
                                attempts: attempt,
                                errors_seen,
                            });
                        }
                        Err(errors) => errors,
                    },
                };
                prompt = format!(
                    "{}\n\nYour previous output failed validation: {}. Return corrected JSON only.",
                    request.prompt,
                    attempt_errors.join("; ")
                );
                errors_seen.extend(attempt_errors);
                last_raw = Some(raw);
            }
        }
    }
    match last_raw {
        Some(raw) => Ok(BackendResponse {
            raw,
            parsed: None,
            attempts: max_attempts,
            errors_seen,
        }),
        None => Err(LlmError::Transport {
            attempts: max_attempts,
            last: errors_seen.last().cloned().unwrap_or_default(),
        }),
    }
}
