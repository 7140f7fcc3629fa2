use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DecomposeError;

pub const QUESTION_SLOT: &str = "<<<<QUESTION>>>>";
pub const FACT_SLOT: &str = "<<<<FACT>>>>";

const DIVIDE: &str = include_str!("../../templates/divide.txt");
const ANSWER: &str = include_str!("../../templates/answer.txt");
const RETRIEVE: &str = include_str!("../../templates/retrieve.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateKind {
    Divide,
    Answer,
    Retrieve,
}

impl TemplateKind {
    fn required_slots(self) -> &'static [&'static str] {
        match self {
            TemplateKind::Divide | TemplateKind::Answer => &[QUESTION_SLOT],
            TemplateKind::Retrieve => &[QUESTION_SLOT, FACT_SLOT],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    body: String,
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind, body: impl Into<String>) -> Result<Self, DecomposeError> {
        let body = body.into();
        if let Some(slot) = kind.required_slots().iter().find(|s| !body.contains(**s)) {
            return Err(DecomposeError::Template(format!(
                "{kind:?} template lacks the {slot} slot"
            )));
        }
        Ok(Self { kind, body })
    }

    pub fn builtin(kind: TemplateKind) -> Self {
        let body = match kind {
            TemplateKind::Divide => DIVIDE,
            TemplateKind::Answer => ANSWER,
            TemplateKind::Retrieve => RETRIEVE,
        };
        Self::new(kind, body.trim_end()).expect("built-in templates carry their slots")
    }

    pub fn from_file(kind: TemplateKind, path: &Path) -> Result<Self, DecomposeError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| DecomposeError::Template(format!("{}: {e}", path.display())))?;
        Self::new(kind, body.trim_end())
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn render(&self, question: &str) -> String {
        self.body.replace(QUESTION_SLOT, question)
    }

    pub fn render_with_fact(&self, question: &str, fact: &str) -> String {
        self.body
            .replace(FACT_SLOT, fact)
            .replace(QUESTION_SLOT, question)
    }
}

/// The three prompts used by one pipeline run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub divide: PromptTemplate,
    pub answer: PromptTemplate,
    pub retrieve: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            divide: PromptTemplate::builtin(TemplateKind::Divide),
            answer: PromptTemplate::builtin(TemplateKind::Answer),
            retrieve: PromptTemplate::builtin(TemplateKind::Retrieve),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_render_question_last() {
        let p = PromptTemplate::builtin(TemplateKind::Divide).render("Q?");
        assert!(p.ends_with("Question: Q?\nSubquestion:"));
        let p = PromptTemplate::builtin(TemplateKind::Answer).render("Q?");
        assert!(p.starts_with("For each question, provide a short and accurate answer."));
        assert!(p.ends_with("Question: Q?"));
    }

    #[test]
    fn missing_slot_rejected() {
        assert!(PromptTemplate::new(TemplateKind::Retrieve, "Question: <<<<QUESTION>>>>").is_err());
        assert!(PromptTemplate::new(TemplateKind::Answer, "no slot").is_err());
    }
}
