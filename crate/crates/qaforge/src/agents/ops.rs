//! Agent operations: render prompt, call backend, parse reply.
//!
//! Parsers tolerate surrounding prose by preferring the keyed line
//! (`SCORE:`, `VERDICT:`, …) and falling back to a whole-reply scan, but
//! they never guess: a reply that fits no expected shape is a typed
//! rejection, and out-of-range values are errors rather than clamped.

use std::collections::BTreeSet;

use super::{
    AgentBackend, AgentError, AgentRole, PromptLibrary, QATuple, RefusalMarkers, RewriteStrategy,
    RoleBindings,
};
use crate::corpus::{Fragment, Language, TopicCategory};
use crate::text::{contains_normalized, normalize_ws};

/// Why a generation run is writing an unanswerable gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeReason {
    LackOfEvidence,
    Misleading,
}

impl NegativeReason {
    pub fn name(self) -> &'static str {
        match self {
            NegativeReason::LackOfEvidence => "lack_of_evidence",
            NegativeReason::Misleading => "misleading",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeVerdict {
    Pass,
    Fail(JudgeFailReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeFailReason {
    IncompleteAnswer,
    PoorlyOrganized,
    Other,
    ParseError,
}

/// Review answerer outcome over retrieved passages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReviewAnswer {
    NoAnswer,
    Answer(String),
}

/// Task 2 classification of a prediction on an unanswerable example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task2Class {
    Incorrect,
    DirectRefusal,
    Reasoned,
}

impl Task2Class {
    pub const ALL: [Task2Class; 3] = [
        Task2Class::Incorrect,
        Task2Class::DirectRefusal,
        Task2Class::Reasoned,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task2Class::Incorrect => "incorrect",
            Task2Class::DirectRefusal => "direct_refusal",
            Task2Class::Reasoned => "reasoned",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("unparseable quality score in reply {0:?}")]
    Unparseable(String),
    #[error("quality score {0} outside 1-5")]
    OutOfRange(i64),
}

#[derive(Debug, thiserror::Error)]
pub enum QaGenError {
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("malformed QA reply: {0}")]
    Malformed(String),
    #[error("evidence does not occur in the fragment")]
    EvidenceNotFound,
}

#[derive(Debug, thiserror::Error)]
pub enum RewriteError {
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("rewrite identical to the original question")]
    Noop,
}

#[derive(Debug, thiserror::Error)]
pub enum GoldError {
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("gold answer lacks a refusal marker")]
    MissingRefusal,
}

/// Backend failure or an unparseable verdict, for the verdict-shaped ops.
#[derive(Debug, thiserror::Error)]
pub enum VerdictError {
    #[error(transparent)]
    Backend(#[from] AgentError),
    #[error("unparseable verdict in reply {0:?}")]
    Parse(String),
}

/// One backend plus everything needed to drive the agent roles against it.
pub struct Agents<'a> {
    backend: &'a dyn AgentBackend,
    prompts: &'a PromptLibrary,
    bindings: &'a RoleBindings,
    refusal: &'a RefusalMarkers,
}

impl<'a> Agents<'a> {
    pub fn new(
        backend: &'a dyn AgentBackend,
        prompts: &'a PromptLibrary,
        bindings: &'a RoleBindings,
        refusal: &'a RefusalMarkers,
    ) -> Self {
        Agents {
            backend,
            prompts,
            bindings,
            refusal,
        }
    }

    fn call(&self, role: AgentRole, vars: &[(&str, &str)]) -> Result<String, AgentError> {
        let binding = self.bindings.for_role(role);
        let request = self.prompts.request(role, &binding, vars);
        self.backend.complete(&request)
    }

    /// Rate a fragment 1-5. Values parsed outside the range are errors,
    /// never clamped.
    pub fn score_quality(&self, fragment: &Fragment) -> Result<u8, ScoreError> {
        let reply = self.call(AgentRole::QualityScorer, &[("fragment", &fragment.text)])?;
        let value = parse_keyed_integer(&reply, "SCORE:")
            .ok_or_else(|| ScoreError::Unparseable(snippet(&reply)))?;
        if (1..=5).contains(&value) {
            Ok(value as u8)
        } else {
            Err(ScoreError::OutOfRange(value))
        }
    }

    /// Which of the seven categories the fragment instantiates. Unknown
    /// labels in the reply are warned about and dropped; an empty set is a
    /// valid outcome.
    pub fn select_topics(
        &self,
        fragment: &Fragment,
    ) -> Result<BTreeSet<TopicCategory>, AgentError> {
        let reply = self.call(AgentRole::TopicSelector, &[("fragment", &fragment.text)])?;
        let (topics, unknown) = parse_topics(&reply);
        for label in unknown {
            log::warn!(
                "topic selector offered unknown category {label:?} for {}",
                fragment.reference()
            );
        }
        Ok(topics)
    }

    /// Generate a question/answer/evidence triple for the fragment. The
    /// evidence must occur in the fragment under whitespace-normalized
    /// matching; the stored evidence is the normalized form.
    pub fn generate_qa(
        &self,
        fragment: &Fragment,
        topics: &BTreeSet<TopicCategory>,
    ) -> Result<QATuple, QaGenError> {
        let topic_list = topics
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(", ");
        let reply = self.call(
            AgentRole::QaGenerator,
            &[("fragment", &fragment.text), ("topics", &topic_list)],
        )?;
        let fields = parse_qa_fields(&reply).map_err(QaGenError::Malformed)?;
        let evidence = normalize_ws(&fields.evidence);
        if !contains_normalized(&fragment.text, &evidence) {
            return Err(QaGenError::EvidenceNotFound);
        }
        Ok(QATuple {
            fragment: fragment.reference(),
            question: fields.question,
            answer: fields.answer,
            evidence,
        })
    }

    /// Binary quality verdict on a generated tuple. An unparseable reply
    /// is a fail verdict, not an error.
    pub fn judge_qa_quality(
        &self,
        tuple: &QATuple,
        fragment: &Fragment,
    ) -> Result<JudgeVerdict, AgentError> {
        let reply = self.call(
            AgentRole::QaJudge,
            &[
                ("fragment", &fragment.text),
                ("question", &tuple.question),
                ("answer", &tuple.answer),
                ("evidence", &tuple.evidence),
            ],
        )?;
        Ok(parse_judge_verdict(&reply))
    }

    /// Rewrite the question under a strategy; echoing the original (after
    /// whitespace normalization) is a rejection.
    pub fn rewrite_question(
        &self,
        tuple: &QATuple,
        strategy: RewriteStrategy,
        fragment: &Fragment,
    ) -> Result<String, RewriteError> {
        let reply = self.call(
            AgentRole::QuestionRewriter,
            &[
                ("question", &tuple.question),
                ("strategy", strategy.name()),
                ("fragment", &fragment.text),
            ],
        )?;
        let rewritten = parse_rewrite(&reply).ok_or(RewriteError::Noop)?;
        if normalize_ws(&rewritten) == normalize_ws(&tuple.question) {
            return Err(RewriteError::Noop);
        }
        Ok(rewritten)
    }

    /// Write the refusal-style gold answer for an unanswerable example.
    /// For misleading examples the rewritten question must be supplied.
    pub fn write_unanswerable_gold(
        &self,
        tuple: &QATuple,
        reason: NegativeReason,
        rewritten_question: Option<&str>,
        language: Language,
    ) -> Result<String, GoldError> {
        assert!(
            reason != NegativeReason::Misleading || rewritten_question.is_some(),
            "misleading gold answers need the rewritten question"
        );
        let question = rewritten_question.unwrap_or(&tuple.question);
        let reply = self.call(
            AgentRole::GoldWriter,
            &[
                ("question", question),
                ("reason", reason.name()),
                ("evidence", &tuple.evidence),
            ],
        )?;
        let answer = reply.trim().to_string();
        if answer.is_empty() || !self.refusal.matches(language, &answer) {
            return Err(GoldError::MissingRefusal);
        }
        Ok(answer)
    }

    /// Ask the review answerer whether the passages answer the question.
    pub fn review_answer(
        &self,
        question: &str,
        passages: &str,
    ) -> Result<ReviewAnswer, VerdictError> {
        let reply = self.call(
            AgentRole::ReviewAnswerer,
            &[("question", question), ("passages", passages)],
        )?;
        parse_review(&reply).ok_or_else(|| VerdictError::Parse(snippet(&reply)))
    }

    /// Do two answers to the question agree? `true` means consistent.
    pub fn judge_consistency(
        &self,
        question: &str,
        gold_answer: &str,
        review_answer: &str,
    ) -> Result<bool, VerdictError> {
        let reply = self.call(
            AgentRole::ConsistencyJudge,
            &[
                ("question", question),
                ("gold_answer", gold_answer),
                ("review_answer", review_answer),
            ],
        )?;
        parse_choice(&reply, "consistent", "contradicts")
            .ok_or_else(|| VerdictError::Parse(snippet(&reply)))
    }

    /// Is the question answerable from common knowledge alone? `true`
    /// means yes, which disqualifies it as a benchmark item.
    pub fn judge_common_sense(&self, question: &str) -> Result<bool, VerdictError> {
        let reply = self.call(AgentRole::CommonSenseJudge, &[("question", question)])?;
        parse_choice(&reply, "common_sense", "context_required")
            .ok_or_else(|| VerdictError::Parse(snippet(&reply)))
    }

    /// Task 1 binary grade for a prediction; `answerable` picks the judge.
    pub fn task1_score(
        &self,
        answerable: bool,
        question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<u8, VerdictError> {
        self.task1_score_with_reply(answerable, question, gold, prediction)
            .map(|(score, _)| score)
    }

    /// Like [`Agents::task1_score`] but keeps the judge's verbatim reply.
    pub fn task1_score_with_reply(
        &self,
        answerable: bool,
        question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<(u8, String), VerdictError> {
        let role = if answerable {
            AgentRole::Task1JudgeAnswerable
        } else {
            AgentRole::Task1JudgeUnanswerable
        };
        let reply = self.call(
            role,
            &[
                ("question", question),
                ("gold", gold),
                ("prediction", prediction),
            ],
        )?;
        match parse_keyed_integer(&reply, "SCORE:") {
            Some(0) => Ok((0, reply)),
            Some(1) => Ok((1, reply)),
            _ => Err(VerdictError::Parse(snippet(&reply))),
        }
    }

    /// Task 2 three-way classification of a prediction.
    pub fn task2_class(
        &self,
        question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<Task2Class, VerdictError> {
        self.task2_class_with_reply(question, gold, prediction)
            .map(|(class, _)| class)
    }

    /// Like [`Agents::task2_class`] but keeps the judge's verbatim reply.
    pub fn task2_class_with_reply(
        &self,
        question: &str,
        gold: &str,
        prediction: &str,
    ) -> Result<(Task2Class, String), VerdictError> {
        let reply = self.call(
            AgentRole::Task2Judge,
            &[
                ("question", question),
                ("gold", gold),
                ("prediction", prediction),
            ],
        )?;
        match parse_task2(&reply) {
            Some(class) => Ok((class, reply)),
            None => Err(VerdictError::Parse(snippet(&reply))),
        }
    }

    /// Free-form candidate answer over a full context.
    pub fn candidate_answer(&self, context: &str, question: &str) -> Result<String, AgentError> {
        let reply = self.call(
            AgentRole::Candidate,
            &[("context", context), ("question", question)],
        )?;
        Ok(reply.trim().to_string())
    }
}

fn snippet(reply: &str) -> String {
    let trimmed = reply.trim();
    let mut end = trimmed.len().min(80);
    while !trimmed.is_char_boundary(end) {
        end -= 1;
    }
    trimmed[..end].to_string()
}

/// Byte offset of `needle` (ASCII) in `haystack`, ignoring ASCII case.
fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    let needle = needle.as_bytes();
    if needle.is_empty() || haystack.len() < needle.len() {
        return None;
    }
    haystack
        .as_bytes()
        .windows(needle.len())
        .position(|window| window.eq_ignore_ascii_case(needle))
}

/// The remainder of the first line containing `key`, or the whole reply
/// when no line carries the key.
fn keyed_text<'a>(reply: &'a str, key: &str) -> &'a str {
    for line in reply.lines() {
        if let Some(pos) = find_ascii_ci(line, key) {
            return &line[pos + key.len()..];
        }
    }
    reply
}

/// First integer in the keyed line (or whole reply), with sign.
fn parse_keyed_integer(reply: &str, key: &str) -> Option<i64> {
    let text = keyed_text(reply, key);
    let bytes = text.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let negative = start > 0 && bytes[start - 1] == b'-';
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |i| start + i);
    let value: i64 = text[start..end].parse().ok()?;
    Some(if negative { -value } else { value })
}

/// Lowercased word tokens; underscores stay inside tokens so labels like
/// `direct_refusal` survive.
fn reply_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() || c == '_' {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn parse_topics(reply: &str) -> (BTreeSet<TopicCategory>, Vec<String>) {
    let text = keyed_text(reply, "TOPICS:").trim();
    let mut topics = BTreeSet::new();
    let mut unknown = Vec::new();
    if text.is_empty() {
        return (topics, unknown);
    }
    for part in text.split([',', ';', '，', '、']) {
        let label = part.trim();
        if label.is_empty() || label.eq_ignore_ascii_case("none") {
            continue;
        }
        match TopicCategory::parse_label(label) {
            Some(topic) => {
                topics.insert(topic);
            }
            None => unknown.push(label.to_string()),
        }
    }
    (topics, unknown)
}

pub(crate) struct QaFields {
    pub question: String,
    pub answer: String,
    pub evidence: String,
}

/// Extract QUESTION/ANSWER/EVIDENCE sections; values may span lines until
/// the next key. Missing or empty fields name themselves in the error.
pub(crate) fn parse_qa_fields(reply: &str) -> Result<QaFields, String> {
    const KEYS: [&str; 3] = ["QUESTION:", "ANSWER:", "EVIDENCE:"];
    let mut values: [Option<String>; 3] = [None, None, None];
    let mut active: Option<usize> = None;
    for line in reply.lines() {
        let mut matched = None;
        for (slot, key) in KEYS.iter().enumerate() {
            if let Some(pos) = find_ascii_ci(line, key) {
                // Guard against ANSWER: matching inside e.g. "NO_ANSWER:".
                let head_ok = line[..pos].trim().is_empty();
                if head_ok && values[slot].is_none() {
                    matched = Some((slot, line[pos + key.len()..].trim().to_string()));
                    break;
                }
            }
        }
        match matched {
            Some((slot, first)) => {
                values[slot] = Some(first);
                active = Some(slot);
            }
            None => {
                if let Some(slot) = active {
                    let value = values[slot].as_mut().expect("active slot is filled");
                    if !line.trim().is_empty() {
                        if !value.is_empty() {
                            value.push(' ');
                        }
                        value.push_str(line.trim());
                    }
                }
            }
        }
    }
    let field = |slot: usize, name: &str| -> Result<String, String> {
        match &values[slot] {
            Some(v) if !v.trim().is_empty() => Ok(v.trim().to_string()),
            _ => Err(format!("missing {name} field")),
        }
    };
    Ok(QaFields {
        question: field(0, "question")?,
        answer: field(1, "answer")?,
        evidence: field(2, "evidence")?,
    })
}

fn parse_judge_verdict(reply: &str) -> JudgeVerdict {
    let line = keyed_text(reply, "VERDICT:");
    let tokens = reply_tokens(line);
    let pass = tokens.iter().any(|t| t == "pass");
    let fail = tokens.iter().any(|t| t == "fail");
    match (pass, fail) {
        (true, false) => JudgeVerdict::Pass,
        (false, true) => {
            let reason_text = keyed_text(line, "REASON:");
            let reason_tokens = reply_tokens(reason_text);
            let reason = if reason_tokens.iter().any(|t| t == "incomplete_answer") {
                JudgeFailReason::IncompleteAnswer
            } else if reason_tokens.iter().any(|t| t == "poorly_organized") {
                JudgeFailReason::PoorlyOrganized
            } else {
                JudgeFailReason::Other
            };
            JudgeVerdict::Fail(reason)
        }
        _ => JudgeVerdict::Fail(JudgeFailReason::ParseError),
    }
}

fn parse_rewrite(reply: &str) -> Option<String> {
    let line = reply.lines().find(|l| !l.trim().is_empty())?;
    let text = match find_ascii_ci(line, "REWRITTEN:") {
        Some(pos) => &line[pos + "REWRITTEN:".len()..],
        None => line,
    };
    let text = text.trim();
    if text.is_empty() {
        None
    } else {
        Some(text.to_string())
    }
}

fn parse_review(reply: &str) -> Option<ReviewAnswer> {
    let line = reply.lines().find(|l| !l.trim().is_empty())?;
    let tokens = reply_tokens(line);
    if tokens.iter().any(|t| t == "no_answer") {
        return Some(ReviewAnswer::NoAnswer);
    }
    if let Some(pos) = find_ascii_ci(line, "ANSWER:") {
        let answer = line[pos + "ANSWER:".len()..].trim();
        if !answer.is_empty() {
            return Some(ReviewAnswer::Answer(answer.to_string()));
        }
    }
    None
}

/// Exactly one of two expected tokens; returns true for the first.
fn parse_choice(reply: &str, yes: &str, no: &str) -> Option<bool> {
    let line = keyed_text(reply, "VERDICT:");
    let tokens = reply_tokens(line);
    let has_yes = tokens.iter().any(|t| t == yes);
    let has_no = tokens.iter().any(|t| t == no);
    match (has_yes, has_no) {
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

fn parse_task2(reply: &str) -> Option<Task2Class> {
    let line = keyed_text(reply, "CLASS:");
    let tokens = reply_tokens(line);
    let mut found = None;
    for class in Task2Class::ALL {
        if tokens.iter().any(|t| t == class.name()) {
            if found.is_some() {
                return None;
            }
            found = Some(class);
        }
    }
    found
}
