//! Deterministic offline backend.
//!
//! Replies come from two layers. Scripted rules match on role and a
//! substring of the user text, first match wins; they script specific
//! verdicts and failures. Anything unscripted falls through to a seeded
//! simulator that reads the marker blocks the bundled templates emit
//! (`[FRAGMENT]…[/FRAGMENT]` and friends) and produces structurally valid
//! replies: generated evidence really occurs in the fragment, rewrites
//! really differ from the original, reviews really depend on whether the
//! asked-about phrase survives in the passages. Strict mode turns the
//! fallthrough into an error naming the unscripted request.
//!
//! Simulated questions carry their subject between "about" and the closing
//! question mark ("文中关于…提到了什么？" in Chinese); the rewriter corrupts
//! that subject and the review/candidate simulators search for it, which is
//! what makes full pipeline runs behave like the real thing end to end.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentBackend, AgentError, AgentRole, ChatRequest, RewriteStrategy};
use crate::corpus::{is_cjk, split_sentences, tokenize, TopicCategory};
use crate::error::{Error, Result};
use crate::text::contains_normalized;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum MockReply {
    /// Return this text.
    Text(String),
    /// Fail with a transport error.
    Fail(String),
    /// Fail with an HTTP-style status.
    Status { status: u16, detail: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MockRule {
    /// Restrict to one role; `None` matches every role.
    #[serde(default)]
    pub role: Option<AgentRole>,
    /// Substring of the concatenated user messages; `None` matches any.
    #[serde(default)]
    pub contains: Option<String>,
    pub reply: MockReply,
}

/// Serializable rule set, loadable from a JSON file.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct MockScript {
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn from_path(path: &Path) -> Result<MockScript> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::Config(vec![format!("mock script {}: {e}", path.display())]))
    }
}

pub struct MockBackend {
    rules: Vec<MockRule>,
    strict: bool,
    seed: u64,
    calls: [AtomicUsize; AgentRole::ALL.len()],
}

impl MockBackend {
    /// Simulator only: every request gets a synthesized reply.
    pub fn simulated(seed: u64) -> Self {
        MockBackend {
            rules: Vec::new(),
            strict: false,
            seed,
            calls: std::array::from_fn(|_| AtomicUsize::new(0)),
        }
    }

    /// No fallthrough: an unscripted request is an error naming its role
    /// and digest.
    pub fn strict(seed: u64) -> Self {
        let mut backend = MockBackend::simulated(seed);
        backend.strict = true;
        backend
    }

    pub fn from_script(script: MockScript, seed: u64) -> Self {
        let mut backend = MockBackend::simulated(seed);
        backend.strict = script.strict;
        backend.rules = script.rules;
        backend
    }

    /// Append a rule; earlier rules win.
    pub fn add_rule(&mut self, rule: MockRule) {
        self.rules.push(rule);
    }

    /// Shorthand for the common text-reply rule.
    pub fn reply(&mut self, role: AgentRole, contains: &str, text: &str) {
        self.add_rule(MockRule {
            role: Some(role),
            contains: Some(contains.to_string()),
            reply: MockReply::Text(text.to_string()),
        });
    }

    /// How many calls this backend has served for `role`.
    pub fn calls(&self, role: AgentRole) -> usize {
        self.calls[role_slot(role)].load(Ordering::Relaxed)
    }

    pub fn total_calls(&self) -> usize {
        self.calls.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }
}

fn role_slot(role: AgentRole) -> usize {
    AgentRole::ALL
        .iter()
        .position(|r| *r == role)
        .expect("role is in ALL")
}

impl AgentBackend for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, AgentError> {
        self.calls[role_slot(request.agent_role)].fetch_add(1, Ordering::Relaxed);
        let user_text = request.user_text();
        for rule in &self.rules {
            if let Some(role) = rule.role {
                if role != request.agent_role {
                    continue;
                }
            }
            if let Some(needle) = &rule.contains {
                if !user_text.contains(needle.as_str()) {
                    continue;
                }
            }
            return match &rule.reply {
                MockReply::Text(text) => Ok(text.clone()),
                MockReply::Fail(message) => Err(AgentError::Transport(message.clone())),
                MockReply::Status { status, detail } => Err(AgentError::Status {
                    status: *status,
                    detail: detail.clone(),
                }),
            };
        }
        if self.strict {
            return Err(AgentError::Unscripted {
                role: request.agent_role.name().into(),
                digest: request.digest(),
            });
        }
        Ok(simulate(self.seed, request, &user_text))
    }
}

/// Content between `[NAME]` and `[/NAME]`, trimmed.
fn block<'a>(text: &'a str, name: &str) -> Option<&'a str> {
    let open = format!("[{name}]");
    let close = format!("[/{name}]");
    let start = text.find(&open)? + open.len();
    let end = start + text[start..].find(&close)?;
    Some(text[start..end].trim())
}

fn has_cjk(text: &str) -> bool {
    text.chars().any(is_cjk)
}

/// Byte span of the subject phrase inside a simulated question.
fn subject_span(question: &str) -> Option<(usize, usize)> {
    if let Some(pos) = question.find("关于") {
        let start = pos + "关于".len();
        if let Some(rel) = question[start..].find("提到") {
            if rel > 0 {
                return Some((start, start + rel));
            }
        }
    }
    if let Some(pos) = question.rfind("about ") {
        let start = pos + "about ".len();
        let end = question.rfind(['?', '？'])?;
        if end > start {
            return Some((start, end));
        }
    }
    None
}

/// First sentence of `text` containing `needle` under normalized matching.
fn sentence_containing<'a>(text: &'a str, needle: &str) -> Option<&'a str> {
    for (start, end) in split_sentences(text) {
        let sentence = &text[start..end];
        if contains_normalized(sentence, needle) {
            return Some(sentence);
        }
    }
    None
}

/// Fraction of `wanted`'s tokens present in `within`; 1.0 when `wanted`
/// has none.
fn token_coverage(wanted: &str, within: &str) -> f64 {
    let wanted_tokens: Vec<String> = tokenize(wanted)
        .iter()
        .map(|s| wanted[s.start..s.end].to_lowercase())
        .collect();
    if wanted_tokens.is_empty() {
        return 1.0;
    }
    let within_tokens: std::collections::HashSet<String> = tokenize(within)
        .iter()
        .map(|s| within[s.start..s.end].to_lowercase())
        .collect();
    let hit = wanted_tokens
        .iter()
        .filter(|t| within_tokens.contains(*t))
        .count();
    hit as f64 / wanted_tokens.len() as f64
}

fn refusal_for(zh: bool) -> &'static str {
    if zh {
        "根据文章内容，该问题无法回答。"
    } else {
        "This question cannot be answered based on the article."
    }
}

fn simulate(seed: u64, request: &ChatRequest, user_text: &str) -> String {
    let digest_seed = u64::from_str_radix(&request.digest(), 16).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ digest_seed);
    match request.agent_role {
        AgentRole::QualityScorer => {
            format!("SCORE: {}", 4 + rng.gen_range(0..2u8))
        }
        AgentRole::TopicSelector => {
            let first = rng.gen_range(0..TopicCategory::ALL.len());
            let second = rng.gen_range(0..TopicCategory::ALL.len());
            let mut names = vec![TopicCategory::ALL[first].to_string()];
            if second != first {
                names.push(TopicCategory::ALL[second].to_string());
            }
            format!("TOPICS: {}", names.join(", "))
        }
        AgentRole::QaGenerator => {
            let fragment = block(user_text, "FRAGMENT").unwrap_or(user_text);
            let (evidence, subject) = pick_evidence(fragment);
            let zh = has_cjk(evidence);
            let question = if zh {
                format!("文中关于{subject}提到了什么？")
            } else {
                format!("What does the passage state about {subject}?")
            };
            format!("QUESTION: {question}\nANSWER: {subject}\nEVIDENCE: {evidence}")
        }
        AgentRole::QaJudge => "VERDICT: pass".into(),
        AgentRole::QuestionRewriter => {
            let question = block(user_text, "QUESTION").unwrap_or_default();
            let strategy = RewriteStrategy::ALL
                .into_iter()
                .find(|s| user_text.contains(s.name()))
                .unwrap_or(RewriteStrategy::EntitySubstitution);
            format!("REWRITTEN: {}", rewrite(question, strategy))
        }
        AgentRole::GoldWriter => {
            let question = block(user_text, "QUESTION").unwrap_or_default();
            let zh = has_cjk(question);
            match subject_span(question) {
                Some((start, end)) => {
                    let subject = &question[start..end];
                    if zh {
                        format!("该问题无法回答。文章中并未提及{subject}。")
                    } else {
                        format!(
                            "The question cannot be answered. \
                             The article does not mention {subject}."
                        )
                    }
                }
                None if zh => "该问题根据文章内容无法回答。".into(),
                None => "The question cannot be answered from the article.".into(),
            }
        }
        AgentRole::ReviewAnswerer => {
            let question = block(user_text, "QUESTION").unwrap_or_default();
            let passages = block(user_text, "PASSAGES").unwrap_or_default();
            match subject_span(question) {
                Some((start, end)) => {
                    match sentence_containing(passages, &question[start..end]) {
                        Some(sentence) => format!("ANSWER: {sentence}"),
                        None => "NO_ANSWER".into(),
                    }
                }
                None => "NO_ANSWER".into(),
            }
        }
        AgentRole::ConsistencyJudge => {
            let gold = block(user_text, "ANSWER_A").unwrap_or_default();
            let review = block(user_text, "ANSWER_B").unwrap_or_default();
            if token_coverage(gold, review) >= 0.5 {
                "VERDICT: CONSISTENT".into()
            } else {
                "VERDICT: CONTRADICTS".into()
            }
        }
        AgentRole::CommonSenseJudge => "VERDICT: context_required".into(),
        AgentRole::Task1JudgeAnswerable => {
            let gold = block(user_text, "GOLD").unwrap_or_default();
            let prediction = block(user_text, "PREDICTION").unwrap_or_default();
            if token_coverage(gold, prediction) >= 0.5 {
                "SCORE: 1".into()
            } else {
                "SCORE: 0".into()
            }
        }
        AgentRole::Task1JudgeUnanswerable => {
            let prediction = block(user_text, "PREDICTION").unwrap_or_default();
            if is_refusal(prediction) {
                "SCORE: 1".into()
            } else {
                "SCORE: 0".into()
            }
        }
        AgentRole::Task2Judge => {
            let prediction = block(user_text, "PREDICTION").unwrap_or_default();
            if !is_refusal(prediction) {
                "CLASS: incorrect".into()
            } else if prediction.contains("does not mention")
                || prediction.contains("only mentions")
                || prediction.contains("并未提及")
            {
                "CLASS: reasoned".into()
            } else {
                "CLASS: direct_refusal".into()
            }
        }
        AgentRole::Candidate => {
            let context = block(user_text, "CONTEXT").unwrap_or_default();
            let question = block(user_text, "QUESTION").unwrap_or_default();
            let zh = has_cjk(question);
            match subject_span(question) {
                Some((start, end)) => {
                    match sentence_containing(context, &question[start..end]) {
                        Some(sentence) => sentence.to_string(),
                        None => refusal_for(zh).into(),
                    }
                }
                None => refusal_for(zh).into(),
            }
        }
    }
}

fn is_refusal(text: &str) -> bool {
    let lowered = text.to_lowercase();
    lowered.contains("cannot be answered") || text.contains("无法回答")
}

/// Longest sentence of the fragment and its subject phrase: the first few
/// tokens of that sentence.
fn pick_evidence(fragment: &str) -> (&str, String) {
    let mut best: Option<(usize, usize, usize)> = None;
    for (start, end) in split_sentences(fragment) {
        let count = tokenize(&fragment[start..end]).len();
        let better = match best {
            Some((_, _, best_count)) => count > best_count,
            None => count > 0,
        };
        if better {
            best = Some((start, end, count));
        }
    }
    let (start, end, _) = best.unwrap_or((0, fragment.len(), 0));
    let evidence = fragment[start..end].trim();
    let spans = tokenize(evidence);
    let subject = if has_cjk(evidence) {
        let take = spans.len().min(6);
        if take == 0 {
            evidence.to_string()
        } else {
            evidence[spans[0].start..spans[take - 1].end].to_string()
        }
    } else {
        let take = spans.len().min(4);
        if take == 0 {
            evidence.to_string()
        } else {
            evidence[spans[0].start..spans[take - 1].end].to_string()
        }
    };
    (evidence, subject)
}

fn rewrite(question: &str, strategy: RewriteStrategy) -> String {
    let zh = has_cjk(question);
    let Some((start, end)) = subject_span(question) else {
        return if zh {
            format!("假设与原文相反，{question}")
        } else {
            format!("Contrary to the passage, {question}")
        };
    };
    let subject = &question[start..end];
    let replacement = match strategy {
        RewriteStrategy::EntitySubstitution => {
            if zh {
                "维尔莫拉".to_string()
            } else {
                "Velmora".to_string()
            }
        }
        RewriteStrategy::ImpossibleCondition => {
            if zh {
                format!("{subject}在公元前十世纪期间")
            } else {
                format!("{subject} during the tenth century BC")
            }
        }
        RewriteStrategy::OtherFalseAssumption => {
            if zh {
                format!("被否定的{subject}")
            } else {
                format!("the disproven {subject}")
            }
        }
    };
    format!("{}{}{}", &question[..start], replacement, &question[end..])
}
