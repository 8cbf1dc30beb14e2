//! Outgoing-message screening and guide generation.

mod backend;
mod lexicon;
mod templates;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

pub use backend::{
    BackendError, BackendKind, CompletionBackend, CompletionRequest, LlmAdapter, RuleOracle,
    StubBackend, Task,
};
pub use lexicon::{
    oracle_detect, tokenize, Detection, Lexicon, LexiconError, PatternClass, DEFAULT_LEXICON,
};
pub use templates::{supports, Feature, PromptVars, TemplateSet, DEFAULT_LANGUAGE};

use crate::domain::{ChatMessage, InterventionMode, PromptStyle, UserId};

/// The backend's "nothing to flag" answer.
pub const PASS_SENTINEL: &str = "No violent language included";
/// The backend's flag answer under the basic reminder prompt.
pub const FLAG_SENTINEL: &str = "Violent language detected";
/// What the user sees for a basic-reminder flag, whatever the backend said.
pub const BASIC_REMINDER_TEXT: &str = "Verbal aggression detected";

pub const GUIDE_WINDOW: usize = 20;
pub const GUIDE_MAX_CHARS: usize = 400;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
pub const DEFAULT_MAX_IN_FLIGHT: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClassifyError {
    #[error("classification backend timed out")]
    BackendTimeout,
    #[error("classification backend refused: {0}")]
    BackendRefusal(String),
    #[error("unparseable backend response: {0:?}")]
    UnparseableResponse(String),
    #[error("no {feature:?} template for mode {mode}")]
    UnsupportedPair {
        mode: InterventionMode,
        feature: Feature,
    },
    #[error("missing template variable {0:?}")]
    MissingVariable(String),
    #[error("template variable {0:?} contains a brace")]
    InvalidVariable(String),
    #[error("guide is not available in mode {0}")]
    GuideUnavailableForMode(InterventionMode),
    #[error("message body is empty")]
    EmptyBody,
}

impl ClassifyError {
    /// Backend could not answer; the caller decides what to do without a verdict.
    pub fn is_unavailable(&self) -> bool {
        matches!(
            self,
            ClassifyError::BackendTimeout | ClassifyError::BackendRefusal(_)
        )
    }
}

impl From<BackendError> for ClassifyError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Timeout => ClassifyError::BackendTimeout,
            BackendError::Refusal(why) => ClassifyError::BackendRefusal(why),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Flagged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidancePayload {
    pub display_text: String,
    pub style: PromptStyle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationOutcome {
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<GuidancePayload>,
}

impl ClassificationOutcome {
    pub fn pass() -> Self {
        Self {
            verdict: Verdict::Pass,
            payload: None,
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.verdict == Verdict::Flagged
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuideAnalysis {
    pub text: String,
    pub window_size: usize,
    pub requested_by: UserId,
}

/// Interpret a complete backend response for `mode`.
///
/// Sentinels match exactly after trimming, case-sensitively.
pub fn parse_llm_response(
    raw: &str,
    mode: InterventionMode,
) -> Result<ClassificationOutcome, ClassifyError> {
    let text = raw.trim();
    if text.is_empty() {
        return Err(ClassifyError::UnparseableResponse(raw.to_string()));
    }
    if text == PASS_SENTINEL {
        return Ok(ClassificationOutcome::pass());
    }
    let style = mode.capabilities().prompt_style;
    let payload = match style {
        PromptStyle::None => None,
        PromptStyle::FixedReminder if text == FLAG_SENTINEL => Some(GuidancePayload {
            display_text: BASIC_REMINDER_TEXT.to_string(),
            style,
        }),
        PromptStyle::FixedReminder => {
            return Err(ClassifyError::UnparseableResponse(raw.to_string()))
        }
        PromptStyle::FullGuidanceNeutral | PromptStyle::FullGuidanceEmpathetic => {
            let prose = normalize_guidance(text);
            if prose.is_empty() {
                return Err(ClassifyError::UnparseableResponse(raw.to_string()));
            }
            Some(GuidancePayload {
                display_text: prose,
                style,
            })
        }
    };
    Ok(ClassificationOutcome {
        verdict: Verdict::Flagged,
        payload,
    })
}

/// Strip markdown headings and list markers so guidance reads as prose.
pub fn normalize_guidance(text: &str) -> String {
    let mut paragraphs: Vec<String> = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            if !current.is_empty() {
                paragraphs.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let line = strip_list_marker(line);
        let line = line.trim_matches(|c| c == '*' || c == '_').trim();
        if line.is_empty() || is_title(line) {
            continue;
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(line);
    }
    if !current.is_empty() {
        paragraphs.push(current);
    }
    paragraphs.join("\n\n")
}

fn strip_list_marker(line: &str) -> &str {
    if let Some(rest) = line.strip_prefix(['-', '*', '•']) {
        return rest.trim_start();
    }
    // "1." "2)" "a." "b)" "(c)"
    let body = line.strip_prefix('(').unwrap_or(line);
    let marker_len = body.chars().take_while(|c| c.is_ascii_digit()).count();
    let marker_len =
        if marker_len == 0 && body.chars().next().is_some_and(|c| c.is_ascii_lowercase()) {
            1
        } else {
            marker_len
        };
    if marker_len > 0 && marker_len <= 2 {
        let rest = &body[marker_len..];
        if let Some(after) = rest.strip_prefix(['.', ')']) {
            if after.starts_with(' ') {
                return after.trim_start();
            }
        }
    }
    line
}

/// Short lines ending in a colon with no sentence punctuation read as section titles.
fn is_title(line: &str) -> bool {
    line.ends_with(':') && line.chars().count() <= 40 && !line.contains(['.', '!', '?'])
}

/// Cut `text` to at most `max_chars` characters at the last sentence end;
/// falls back to the last whitespace, then to a hard cut.
pub fn truncate_at_sentence(text: &str, max_chars: usize) -> String {
    let text = text.trim();
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let prefix: String = text.chars().take(max_chars).collect();
    let chars: Vec<(usize, char)> = prefix.char_indices().collect();
    let mut sentence_end = None;
    for (i, &(at, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?' | '。' | '！' | '？') {
            continue;
        }
        let mut end = at + c.len_utf8();
        let mut j = i + 1;
        while let Some(&(next_at, q)) = chars.get(j) {
            if matches!(q, '"' | '\'' | '”' | '’' | ')') {
                end = next_at + q.len_utf8();
                j += 1;
            } else {
                break;
            }
        }
        // a terminator inside a word ("e.g", "3.5") is not an end
        let boundary = match chars.get(j) {
            None => text.len() == end || text[end..].starts_with(char::is_whitespace),
            Some(&(_, next)) => next.is_whitespace(),
        };
        if boundary {
            sentence_end = Some(end);
        }
    }
    if let Some(end) = sentence_end {
        return prefix[..end].trim_end().to_string();
    }
    match prefix.rfind(char::is_whitespace) {
        Some(ws) if !prefix[..ws].trim().is_empty() => prefix[..ws].trim_end().to_string(),
        _ => prefix,
    }
}

/// Guide transcript: one `sender: body` line per message, oldest first.
pub fn render_transcript(window: &[ChatMessage]) -> String {
    window
        .iter()
        .map(|m| format!("{}: {}", m.sender, m.body))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Screening and guide front end over a pluggable backend.
#[derive(Clone)]
pub struct Classifier {
    backend: Arc<dyn CompletionBackend>,
    templates: Arc<TemplateSet>,
    timeout: Duration,
    limiter: Arc<Semaphore>,
}

impl std::fmt::Debug for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classifier")
            .field("backend", &self.backend.kind())
            .field("timeout", &self.timeout)
            .field("available_permits", &self.limiter.available_permits())
            .finish()
    }
}

impl Classifier {
    pub fn new(backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            templates: Arc::new(TemplateSet::builtin()),
            timeout: DEFAULT_TIMEOUT,
            limiter: Arc::new(Semaphore::new(DEFAULT_MAX_IN_FLIGHT)),
        }
    }

    pub fn rule_oracle() -> Self {
        Self::new(Arc::new(RuleOracle::default()))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_templates(mut self, templates: TemplateSet) -> Self {
        self.templates = Arc::new(templates);
        self
    }

    /// Cap outstanding backend requests at `n` (at least one).
    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Arc::new(Semaphore::new(n.max(1)));
        self
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Waiting for a permit counts against the timeout.
    async fn call(&self, req: CompletionRequest) -> Result<String, ClassifyError> {
        let work = async {
            let _permit = self
                .limiter
                .acquire()
                .await
                .map_err(|_| BackendError::Refusal("limiter closed".into()))?;
            self.backend.complete(req).await
        };
        match tokio::time::timeout(self.timeout, work).await {
            Ok(res) => res.map_err(ClassifyError::from),
            Err(_) => Err(ClassifyError::BackendTimeout),
        }
    }

    /// Screen one outgoing message. Baseline screens nothing and passes.
    pub async fn classify_outgoing(
        &self,
        lang: &str,
        mode: InterventionMode,
        vars: &PromptVars,
        body: &str,
    ) -> Result<ClassificationOutcome, ClassifyError> {
        if body.trim().is_empty() {
            return Err(ClassifyError::EmptyBody);
        }
        if mode == InterventionMode::Baseline {
            return Ok(ClassificationOutcome::pass());
        }
        let instructions = self.templates.render(lang, mode, Feature::Prompt, vars)?;
        let raw = self
            .call(CompletionRequest {
                task: Task::Classify { mode },
                instructions,
                content: body.to_string(),
            })
            .await?;
        parse_llm_response(&raw, mode)
    }

    /// Analyze the newest [`GUIDE_WINDOW`] messages of `window` for `requester`.
    pub async fn generate_guide(
        &self,
        lang: &str,
        mode: InterventionMode,
        window: &[ChatMessage],
        vars: &PromptVars,
        requester: &UserId,
    ) -> Result<GuideAnalysis, ClassifyError> {
        if !mode.capabilities().guide_enabled {
            return Err(ClassifyError::GuideUnavailableForMode(mode));
        }
        let window = &window[window.len().saturating_sub(GUIDE_WINDOW)..];
        let instructions = self.templates.render(lang, mode, Feature::Guide, vars)?;
        let task = Task::Guide {
            mode,
            requester: requester.to_string(),
        };
        let raw = self
            .call(CompletionRequest {
                task,
                instructions,
                content: render_transcript(window),
            })
            .await?;
        let text = truncate_at_sentence(&raw, GUIDE_MAX_CHARS);
        if text.is_empty() {
            return Err(ClassifyError::UnparseableResponse(raw));
        }
        Ok(GuideAnalysis {
            text,
            window_size: window.len(),
            requested_by: requester.clone(),
        })
    }
}
