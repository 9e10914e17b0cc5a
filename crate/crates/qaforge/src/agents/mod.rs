//! LLM-backed agent roles behind one blocking backend contract.
//!
//! Every step that needs a model call — scoring fragments, picking topics,
//! generating and judging QA pairs, rewriting questions, writing refusal
//! gold answers, reviewing candidates, and judging evaluations — goes
//! through [`AgentBackend::complete`] with a prompt rendered from a
//! per-role template. Backends are swappable: [`MockBackend`] replays
//! scripts and simulates replies deterministically, [`HttpBackend`] speaks
//! a chat-completion wire protocol.

mod http;
mod mock;
mod ops;
mod prompts;

pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{MockBackend, MockReply, MockRule, MockScript};
pub use ops::{
    Agents, GoldError, JudgeFailReason, JudgeVerdict, NegativeReason, QaGenError, ReviewAnswer,
    RewriteError, ScoreError, Task2Class, VerdictError,
};
pub use prompts::PromptLibrary;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{FragmentRef, Language};
use crate::text::contains_normalized;

/// Speaker tag on a chat message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

/// One completion request. `agent_role` routes mock dispatch and never
/// reaches the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub agent_role: AgentRole,
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl ChatRequest {
    /// Stable content digest, used as the mock's script key.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.agent_role.name());
        hasher.update([0]);
        hasher.update(&self.model);
        hasher.update([0]);
        hasher.update(self.temperature.to_le_bytes());
        hasher.update(self.max_output_tokens.to_le_bytes());
        for message in &self.messages {
            hasher.update([0]);
            hasher.update(match message.role {
                ChatRole::System => "system",
                ChatRole::User => "user",
            });
            hasher.update([0]);
            hasher.update(&message.content);
        }
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            use std::fmt::Write;
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }

    /// Concatenated user-message text, for matchers and simulators.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == ChatRole::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// How a backend call can fail after its own retry policy is exhausted.
#[derive(Debug, Clone, thiserror::Error)]
pub enum AgentError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend returned status {status}: {detail}")]
    Status { status: u16, detail: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("no scripted reply for role {role} (request digest {digest})")]
    Unscripted { role: String, digest: String },
    #[error("auth environment variable {0} is not set")]
    MissingAuth(String),
}

/// Blocking completion backend. Implementations must tolerate concurrent
/// calls; retrying is the implementation's business and calls must be
/// idempotent.
pub trait AgentBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError>;
}

impl<T: AgentBackend + ?Sized> AgentBackend for &T {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        (**self).complete(request)
    }
}

/// The full cast of model-backed roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    QualityScorer,
    TopicSelector,
    QaGenerator,
    QaJudge,
    QuestionRewriter,
    GoldWriter,
    ReviewAnswerer,
    ConsistencyJudge,
    CommonSenseJudge,
    Task1JudgeAnswerable,
    Task1JudgeUnanswerable,
    Task2Judge,
    Candidate,
}

impl AgentRole {
    pub const ALL: [AgentRole; 13] = [
        AgentRole::QualityScorer,
        AgentRole::TopicSelector,
        AgentRole::QaGenerator,
        AgentRole::QaJudge,
        AgentRole::QuestionRewriter,
        AgentRole::GoldWriter,
        AgentRole::ReviewAnswerer,
        AgentRole::ConsistencyJudge,
        AgentRole::CommonSenseJudge,
        AgentRole::Task1JudgeAnswerable,
        AgentRole::Task1JudgeUnanswerable,
        AgentRole::Task2Judge,
        AgentRole::Candidate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AgentRole::QualityScorer => "quality_scorer",
            AgentRole::TopicSelector => "topic_selector",
            AgentRole::QaGenerator => "qa_generator",
            AgentRole::QaJudge => "qa_judge",
            AgentRole::QuestionRewriter => "question_rewriter",
            AgentRole::GoldWriter => "gold_writer",
            AgentRole::ReviewAnswerer => "review_answerer",
            AgentRole::ConsistencyJudge => "consistency_judge",
            AgentRole::CommonSenseJudge => "common_sense_judge",
            AgentRole::Task1JudgeAnswerable => "task1_judge_answerable",
            AgentRole::Task1JudgeUnanswerable => "task1_judge_unanswerable",
            AgentRole::Task2Judge => "task2_judge",
            AgentRole::Candidate => "candidate",
        }
    }

    /// Judging and scoring roles must run at temperature 0 so their
    /// verdicts are reproducible.
    pub fn is_judging(self) -> bool {
        matches!(
            self,
            AgentRole::QualityScorer
                | AgentRole::QaJudge
                | AgentRole::ConsistencyJudge
                | AgentRole::CommonSenseJudge
                | AgentRole::Task1JudgeAnswerable
                | AgentRole::Task1JudgeUnanswerable
                | AgentRole::Task2Judge
        )
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Model and decoding parameters for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleBinding {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for RoleBinding {
    fn default() -> Self {
        RoleBinding {
            model: "qwen2.5-72b-instruct".into(),
            temperature: 0.7,
            max_output_tokens: 1024,
        }
    }
}

/// Per-role bindings with a shared fallback. Judging roles always resolve
/// to temperature 0 no matter what the binding says.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RoleBindings {
    pub default: RoleBinding,
    pub overrides: BTreeMap<AgentRole, RoleBinding>,
}

impl RoleBindings {
    pub fn for_role(&self, role: AgentRole) -> RoleBinding {
        let mut binding = self.overrides.get(&role).unwrap_or(&self.default).clone();
        if role.is_judging() {
            binding.temperature = 0.0;
        }
        binding
    }
}

/// Phrases whose presence marks an answer as a refusal, per language.
/// Matching is a case-insensitive, whitespace-normalized substring check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefusalMarkers {
    pub en: Vec<String>,
    pub zh: Vec<String>,
}

impl Default for RefusalMarkers {
    fn default() -> Self {
        RefusalMarkers {
            en: vec!["cannot be answered".into()],
            zh: vec!["无法回答".into()],
        }
    }
}

impl RefusalMarkers {
    pub fn matches(&self, language: Language, text: &str) -> bool {
        let lowered = text.to_lowercase();
        let markers = match language {
            Language::En => &self.en,
            Language::Zh => &self.zh,
        };
        markers
            .iter()
            .any(|m| contains_normalized(&lowered, &m.to_lowercase()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.en.is_empty() || self.zh.is_empty() {
            return Err("refusal markers must list at least one phrase per language".into());
        }
        Ok(())
    }
}

/// A generated question/answer/evidence triple tied to its fragment.
///
/// `evidence` is stored whitespace-normalized and always occurs in the
/// source fragment under normalized matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QATuple {
    pub fragment: FragmentRef,
    pub question: String,
    pub answer: String,
    pub evidence: String,
}

/// How a question gets rewritten into a misleading one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteStrategy {
    EntitySubstitution,
    ImpossibleCondition,
    OtherFalseAssumption,
}

impl RewriteStrategy {
    pub const ALL: [RewriteStrategy; 3] = [
        RewriteStrategy::EntitySubstitution,
        RewriteStrategy::ImpossibleCondition,
        RewriteStrategy::OtherFalseAssumption,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewriteStrategy::EntitySubstitution => "entity_substitution",
            RewriteStrategy::ImpossibleCondition => "impossible_condition",
            RewriteStrategy::OtherFalseAssumption => "other_false_assumption",
        }
    }
}

impl fmt::Display for RewriteStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
