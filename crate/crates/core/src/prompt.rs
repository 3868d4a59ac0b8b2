//! Role prompt templates and their rendering into chat messages.
//!
//! Templates use `{name}` placeholders for the four text fields of an action.
//! `{{` and `}}` produce literal braces.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentRole, DataTransferAction};

pub const PLACEHOLDERS: [&str; 4] = ["company_context", "stated_purpose", "proposed_operation", "operational_context"];

/// Shared instruction block asking for the structured answer.
pub const OUTPUT_INSTRUCTIONS: &str = include_str!("../assets/prompts/output_instructions.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("unbalanced brace at byte {0}")]
    Unbalanced(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role: AgentRole,
    pub system_text: String,
    pub output_instructions: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".to_string(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".to_string(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub messages: Vec<ChatMessage>,
}

enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn segments(text: &str) -> Result<Vec<Segment<'_>>, TemplateError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let (mut i, mut lit_start) = (0, 0);
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Segment::Literal(&text[lit_start..=i]));
                i += 2;
                lit_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Segment::Literal(&text[lit_start..=i]));
                i += 2;
                lit_start = i;
            }
            b'{' => {
                let close = text[i + 1..].find(['}', '{']).map(|off| i + 1 + off);
                let close = match close {
                    Some(c) if bytes[c] == b'}' => c,
                    _ => return Err(TemplateError::Unbalanced(i)),
                };
                let name = &text[i + 1..close];
                if !PLACEHOLDERS.contains(&name) {
                    return Err(TemplateError::UnknownPlaceholder(name.to_string()));
                }
                out.push(Segment::Literal(&text[lit_start..i]));
                out.push(Segment::Placeholder(name));
                i = close + 1;
                lit_start = i;
            }
            b'}' => return Err(TemplateError::Unbalanced(i)),
            _ => i += 1,
        }
    }
    out.push(Segment::Literal(&text[lit_start..]));
    Ok(out)
}

/// Substitutes the action's text fields into `text`.
pub fn fill_placeholders(text: &str, action: &DataTransferAction) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(text.len() + 256);
    for seg in segments(text)? {
        match seg {
            Segment::Literal(s) => out.push_str(s),
            Segment::Placeholder(name) => out.push_str(match name {
                "company_context" => &action.company_context,
                "stated_purpose" => &action.stated_purpose,
                "proposed_operation" => &action.proposed_operation,
                _ => &action.operational_context,
            }),
        }
    }
    Ok(out)
}

impl PromptTemplate {
    pub fn validate(&self) -> Result<(), TemplateError> {
        segments(&self.system_text)?;
        segments(&self.output_instructions)?;
        Ok(())
    }

    /// Built-in template for `role`.
    pub fn default_for(role: AgentRole) -> Self {
        let system_text = match role {
            AgentRole::LegalAnalyst => include_str!("../assets/prompts/legal_analyst.txt"),
            AgentRole::ContextAnalyzer => include_str!("../assets/prompts/context_analyzer.txt"),
            AgentRole::RiskAssessor => include_str!("../assets/prompts/risk_assessor.txt"),
            AgentRole::SingleAgent => include_str!("../assets/prompts/single_agent.txt"),
        };
        PromptTemplate {
            role,
            system_text: system_text.to_string(),
            output_instructions: OUTPUT_INSTRUCTIONS.to_string(),
        }
    }
}

/// Built-in coordinator prompt, used when synthesis is delegated to a model.
pub const COORDINATOR_PROMPT: &str = include_str!("../assets/prompts/coordinator.txt");

/// Renders a template for one action: a system message (omitted when empty) and the output instructions.
pub fn render_prompt(template: &PromptTemplate, action: &DataTransferAction) -> Result<PromptPayload, TemplateError> {
    let system = fill_placeholders(&template.system_text, action)?;
    let instructions = fill_placeholders(&template.output_instructions, action)?;
    let mut messages = vec![];
    if !system.trim().is_empty() {
        messages.push(ChatMessage::system(system));
    }
    messages.push(ChatMessage::user(instructions));
    Ok(PromptPayload { messages })
}

/// One line per specialist analysis, used as extra context for a model-backed coordinator.
pub fn describe_analyses(analyses: &[crate::domain::AgentAnalysis]) -> String {
    analyses
        .iter()
        .map(|a| format!("- {}: {} (confidence {:.2}). {}", a.agent_role, a.verdict.as_str(), a.confidence, a.rationale.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}
