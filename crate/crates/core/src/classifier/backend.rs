//! Completion backends: the HTTP LLM adapter and the offline rule oracle.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexicon::{tokenize, Detection, Lexicon, PatternClass};
use super::{FLAG_SENTINEL, PASS_SENTINEL};
use crate::domain::InterventionMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    LlmAdapter,
    RuleOracle,
    Stub,
}

/// What the request is for. Backends that only speak text ignore it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Classify {
        mode: InterventionMode,
    },
    Guide {
        mode: InterventionMode,
        requester: String,
    },
}

/// One self-contained, single-turn request: rendered instructions plus the
/// message or transcript. There is no conversation handle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub task: Task,
    pub instructions: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend timed out")]
    Timeout,
    #[error("backend refused: {0}")]
    Refusal(String),
}

#[async_trait]
pub trait CompletionBackend: Send + Sync {
    fn kind(&self) -> BackendKind;

    async fn complete(&self, req: CompletionRequest) -> Result<String, BackendError>;
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug, Clone)]
pub struct LlmAdapter {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatTurn<'a>; 2],
}

#[derive(Serialize)]
struct ChatTurn<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    #[serde(default)]
    finish_reason: Option<String>,
    message: Option<ChoiceMessage>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

impl LlmAdapter {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .unwrap_or_else(|_| reqwest::Client::new());
        Self {
            client,
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
        }
    }
}

#[async_trait]
impl CompletionBackend for LlmAdapter {
    fn kind(&self) -> BackendKind {
        BackendKind::LlmAdapter
    }

    async fn complete(&self, req: CompletionRequest) -> Result<String, BackendError> {
        let body = ChatRequest {
            model: &self.model,
            messages: [
                ChatTurn {
                    role: "system",
                    content: &req.instructions,
                },
                ChatTurn {
                    role: "user",
                    content: &req.content,
                },
            ],
        };
        let mut http = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(key);
        }
        let resp = http.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Refusal(format!("transport: {e}"))
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Refusal(format!("status {status}")));
        }
        let parsed: ChatResponse = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Refusal(format!("decode: {e}"))
            }
        })?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Refusal("no choices".into()))?;
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(BackendError::Refusal("content filter".into()));
        }
        choice
            .message
            .and_then(|m| m.content)
            .ok_or_else(|| BackendError::Refusal("empty message".into()))
    }
}

/// Offline backend that answers with the same sentinel/prose contract an
/// instructed LLM would, driven by the rule lexicon.
#[derive(Debug, Clone, Default)]
pub struct RuleOracle {
    lexicon: Lexicon,
}

impl RuleOracle {
    pub fn new(lexicon: Lexicon) -> Self {
        Self { lexicon }
    }

    pub fn detect(&self, body: &str) -> Option<Detection> {
        self.lexicon.detect(body)
    }

    fn classify_text(&self, mode: InterventionMode, body: &str) -> String {
        let Some(hit) = self.lexicon.detect(body) else {
            return PASS_SENTINEL.to_string();
        };
        let what = match hit.class {
            PatternClass::Label => "labels your partner instead of describing what happened",
            PatternClass::Command => "reads as a demand rather than a request",
            PatternClass::Profanity => "uses words that are likely to hurt",
            PatternClass::Threat => "threatens the relationship itself",
            PatternClass::Dismissive => "can come across as shutting the conversation down",
        };
        match mode {
            InterventionMode::Baseline | InterventionMode::BasicReminder => FLAG_SENTINEL.to_string(),
            InterventionMode::NeutralGuide => format!(
                "You may be feeling frustrated and in need of being understood. \
                 The wording \"{}\" {what}. \
                 A nonviolent message describes an observation, names the feeling, states the need behind it and ends with a concrete request. \
                 For example: \"When this keeps happening I feel upset, because I need us to share the load. Could we talk about a plan?\"",
                hit.pattern
            ),
            InterventionMode::EmpatheticGuide => format!(
                "It sounds like you're really hurting right now, and that's completely understandable. \
                 Saying \"{}\" {what}, so your partner might hear blame instead of your feelings. \
                 Try sharing what you noticed, how it made you feel, what you need and what you'd like to ask for. \
                 Maybe something like: \"I feel hurt and tired right now, and I need us to work on this together. Can we talk about it?\"",
                hit.pattern
            ),
        }
    }

    fn guide_text(&self, mode: InterventionMode, requester: &str, transcript: &str) -> String {
        let latest = transcript
            .lines()
            .rev()
            .filter_map(|l| l.split_once(": "))
            .find(|(who, _)| *who != requester);
        let Some((partner, said)) = latest else {
            return "There is nothing from your partner yet. Notice what you are feeling and what you need before you reply.".into();
        };
        let words = tokenize(said);
        let has = |w: &[&str]| words.iter().any(|t| w.contains(&t.as_str()));
        let (feeling, need) = if has(&["tired", "exhausted", "sleep", "busy", "work"]) {
            ("exhausted", "rest and support")
        } else if has(&["alone", "lonely", "ignore", "ignored", "miss"]) {
            ("lonely", "connection and attention")
        } else if has(&["sorry", "fault", "apologize"]) {
            ("regretful", "reassurance that you are still close")
        } else if has(&["unfair", "always", "never", "chores", "dishes"]) {
            ("resentful", "fairness and appreciation")
        } else {
            ("frustrated", "to be heard and understood")
        };
        let quote: String = said.chars().take(80).collect();
        match mode {
            InterventionMode::EmpatheticGuide => format!(
                "When {partner} said \"{quote}\", they may have been feeling {feeling}. \
                 Underneath, they might need {need}. \
                 Try asking gently what would help, and notice your own feelings and needs too."
            ),
            _ => format!(
                "{partner} wrote \"{quote}\". Possible feeling: {feeling}. Possible need: {need}. \
                 Consider both your needs and theirs before replying."
            ),
        }
    }
}

#[async_trait]
impl CompletionBackend for RuleOracle {
    fn kind(&self) -> BackendKind {
        BackendKind::RuleOracle
    }

    async fn complete(&self, req: CompletionRequest) -> Result<String, BackendError> {
        Ok(match &req.task {
            Task::Classify { mode } => self.classify_text(*mode, &req.content),
            Task::Guide { mode, requester } => self.guide_text(*mode, requester, &req.content),
        })
    }
}

/// Test backend: returns a fixed response or behaves like a dead endpoint.
#[derive(Debug, Clone)]
pub enum StubBackend {
    Reply(String),
    /// Never answers; the caller's timeout fires.
    Hang,
    Refuse,
}

#[async_trait]
impl CompletionBackend for StubBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Stub
    }

    async fn complete(&self, _req: CompletionRequest) -> Result<String, BackendError> {
        match self {
            StubBackend::Reply(s) => Ok(s.clone()),
            StubBackend::Hang => std::future::pending().await,
            StubBackend::Refuse => Err(BackendError::Refusal("stub refusal".into())),
        }
    }
}
