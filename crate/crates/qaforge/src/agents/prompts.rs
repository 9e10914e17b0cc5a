//! Per-role prompt templates.
//!
//! Templates are data: one text file per role, bundled into the binary and
//! overridable from a directory. A file holds an optional system section,
//! a line containing only `---`, then the user section. `{{name}}`
//! placeholders are filled in a single pass, so substituted values are
//! never re-scanned even if they happen to contain placeholder syntax.

use std::collections::BTreeMap;
use std::path::Path;

use super::{AgentRole, ChatMessage, ChatRequest, ChatRole, RoleBinding};
use crate::error::{Error, Result};

macro_rules! bundled_template {
    ($role:expr) => {
        include_str!(concat!("assets/", $role, ".txt"))
    };
}

fn bundled_text(role: AgentRole) -> &'static str {
    match role {
        AgentRole::QualityScorer => bundled_template!("quality_scorer"),
        AgentRole::TopicSelector => bundled_template!("topic_selector"),
        AgentRole::QaGenerator => bundled_template!("qa_generator"),
        AgentRole::QaJudge => bundled_template!("qa_judge"),
        AgentRole::QuestionRewriter => bundled_template!("question_rewriter"),
        AgentRole::GoldWriter => bundled_template!("gold_writer"),
        AgentRole::ReviewAnswerer => bundled_template!("review_answerer"),
        AgentRole::ConsistencyJudge => bundled_template!("consistency_judge"),
        AgentRole::CommonSenseJudge => bundled_template!("common_sense_judge"),
        AgentRole::Task1JudgeAnswerable => bundled_template!("task1_judge_answerable"),
        AgentRole::Task1JudgeUnanswerable => bundled_template!("task1_judge_unanswerable"),
        AgentRole::Task2Judge => bundled_template!("task2_judge"),
        AgentRole::Candidate => bundled_template!("candidate"),
    }
}

/// Placeholders a role's template may reference.
fn allowed_placeholders(role: AgentRole) -> &'static [&'static str] {
    match role {
        AgentRole::QualityScorer | AgentRole::TopicSelector => &["fragment"],
        AgentRole::QaGenerator => &["fragment", "topics"],
        AgentRole::QaJudge => &["fragment", "question", "answer", "evidence"],
        AgentRole::QuestionRewriter => &["question", "strategy", "fragment"],
        AgentRole::GoldWriter => &["question", "reason", "evidence"],
        AgentRole::ReviewAnswerer => &["question", "passages"],
        AgentRole::ConsistencyJudge => &["question", "gold_answer", "review_answer"],
        AgentRole::CommonSenseJudge => &["question"],
        AgentRole::Task1JudgeAnswerable
        | AgentRole::Task1JudgeUnanswerable
        | AgentRole::Task2Judge => &["question", "gold", "prediction"],
        AgentRole::Candidate => &["context", "question"],
    }
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<AgentRole, String>,
}

impl PromptLibrary {
    /// The templates compiled into the binary.
    pub fn bundled() -> Self {
        let templates = AgentRole::ALL
            .into_iter()
            .map(|role| (role, bundled_text(role).to_string()))
            .collect();
        PromptLibrary { templates }
    }

    /// Bundled templates with any `<role>.txt` files under `dir` replacing
    /// their counterparts. Every loaded template is checked against its
    /// role's placeholder set.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        let mut library = PromptLibrary::bundled();
        for role in AgentRole::ALL {
            let path = dir.join(format!("{}.txt", role.name()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                library.templates.insert(role, text);
            }
        }
        library.validate()?;
        Ok(library)
    }

    pub fn validate(&self) -> Result<()> {
        for (role, text) in &self.templates {
            let allowed = allowed_placeholders(*role);
            for placeholder in scan_placeholders(text) {
                if !allowed.contains(&placeholder.as_str()) {
                    return Err(Error::TemplatePlaceholder {
                        role: role.name().into(),
                        placeholder,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn raw(&self, role: AgentRole) -> &str {
        &self.templates[&role]
    }

    /// Fill placeholders and split into (system, user) sections.
    pub fn render(&self, role: AgentRole, vars: &[(&str, &str)]) -> (Option<String>, String) {
        let filled = substitute(&self.templates[&role], vars);
        match split_sections(&filled) {
            (Some(system), user) => (Some(system), user),
            (None, user) => (None, user),
        }
    }

    /// Build a complete request for `role` with its binding's parameters.
    pub fn request(
        &self,
        role: AgentRole,
        binding: &RoleBinding,
        vars: &[(&str, &str)],
    ) -> ChatRequest {
        let (system, user) = self.render(role, vars);
        let mut messages = Vec::with_capacity(2);
        if let Some(content) = system {
            messages.push(ChatMessage {
                role: ChatRole::System,
                content,
            });
        }
        messages.push(ChatMessage {
            role: ChatRole::User,
            content: user,
        });
        ChatRequest {
            agent_role: role,
            model: binding.model.clone(),
            messages,
            temperature: binding.temperature,
            max_output_tokens: binding.max_output_tokens,
        }
    }
}

fn scan_placeholders(text: &str) -> Vec<String> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        rest = &rest[open + 2..];
        if let Some(close) = rest.find("}}") {
            found.push(rest[..close].trim().to_string());
            rest = &rest[close + 2..];
        } else {
            break;
        }
    }
    found
}

fn substitute(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        rest = &rest[open + 2..];
        let Some(close) = rest.find("}}") else {
            out.push_str("{{");
            break;
        };
        let name = rest[..close].trim();
        match vars.iter().find(|(k, _)| *k == name) {
            Some((_, value)) => out.push_str(value),
            None => {
                debug_assert!(false, "unbound placeholder {name} survived validation");
                out.push_str("{{");
                out.push_str(&rest[..close]);
                out.push_str("}}");
            }
        }
        rest = &rest[close + 2..];
    }
    out.push_str(rest);
    out
}

fn split_sections(text: &str) -> (Option<String>, String) {
    for (pos, line) in line_spans(text) {
        if line.trim() == "---" {
            let system = text[..pos].trim();
            let user = text[pos + line.len()..].trim();
            if system.is_empty() {
                return (None, user.to_string());
            }
            return (Some(system.to_string()), user.to_string());
        }
    }
    (None, text.trim().to_string())
}

fn line_spans(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').map(move |line| {
        let start = offset;
        offset += line.len();
        (start, line)
    })
}
