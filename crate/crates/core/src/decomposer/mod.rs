//! One-shot question decomposition into marker-linked sub-questions.

mod template;

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, GenerationBackend};

pub use template::{PromptTemplate, TemplateKind, TemplateSet, FACT_SLOT, QUESTION_SLOT};

/// Placeholder for the previous hop's answer.
pub const MARKER: &str = "[ENT]";

#[derive(Debug, thiserror::Error)]
pub enum DecomposeError {
    #[error("malformed decomposition ({reason}); raw output: {raw:?}")]
    Format { reason: String, raw: String },
    #[error("sub-question has no {MARKER} marker: {0:?}")]
    MissingMarker(String),
    #[error("decomposition backend: {0}")]
    Backend(#[from] BackendError),
    #[error("cannot build plan from dataset: {0}")]
    Data(String),
    #[error("prompt template: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPlan", into = "RawPlan")]
pub struct DecompositionPlan {
    original_question: String,
    sub_questions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RawPlan {
    original_question: String,
    sub_questions: Vec<String>,
    n: usize,
}

impl TryFrom<RawPlan> for DecompositionPlan {
    type Error = String;

    fn try_from(raw: RawPlan) -> Result<Self, String> {
        if raw.n != raw.sub_questions.len() {
            return Err(format!(
                "n = {} but {} sub-questions",
                raw.n,
                raw.sub_questions.len()
            ));
        }
        Self::new(raw.original_question, raw.sub_questions).map_err(|e| e.to_string())
    }
}

impl From<DecompositionPlan> for RawPlan {
    fn from(plan: DecompositionPlan) -> Self {
        Self {
            n: plan.sub_questions.len(),
            original_question: plan.original_question,
            sub_questions: plan.sub_questions,
        }
    }
}

fn invalid(reason: impl Into<String>, raw: &str) -> DecomposeError {
    DecomposeError::Format {
        reason: reason.into(),
        raw: raw.to_string(),
    }
}

impl DecompositionPlan {
    /// Checks: at least one sub-question; each is a single trimmed line ending
    /// in `?`; the first has no marker and every later one has one.
    pub fn new(
        original_question: impl Into<String>,
        sub_questions: Vec<String>,
    ) -> Result<Self, DecomposeError> {
        let joined = sub_questions.join("\n");
        if sub_questions.is_empty() {
            return Err(invalid("no sub-questions", &joined));
        }
        for (i, q) in sub_questions.iter().enumerate() {
            if q.trim() != q || q.contains('\n') || !q.ends_with('?') || q.len() < 2 {
                return Err(invalid(
                    format!("sub-question {} is not a question line", i + 1),
                    &joined,
                ));
            }
            match (i, q.contains(MARKER)) {
                (0, true) => {
                    return Err(invalid("first sub-question contains the marker", &joined))
                }
                (i, false) if i > 0 => {
                    return Err(invalid(
                        format!("sub-question {} lacks the marker", i + 1),
                        &joined,
                    ))
                }
                _ => {}
            }
        }
        Ok(Self {
            original_question: original_question.into(),
            sub_questions,
        })
    }

    pub fn original_question(&self) -> &str {
        &self.original_question
    }

    pub fn sub_questions(&self) -> &[String] {
        &self.sub_questions
    }

    pub fn n(&self) -> usize {
        self.sub_questions.len()
    }

    /// Numbered lines, one sub-question per line.
    pub fn render(&self) -> String {
        self.sub_questions
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}. {q}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+[.)]\s+").unwrap());
static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^sub-?questions?\s*:\s*").unwrap());

/// Split a line holding several numbered items ("1. A? 2. B?") into items.
fn split_numbered(line: &str) -> Vec<&str> {
    let starts: Vec<(usize, usize)> = NUMBER
        .find_iter(line)
        .filter(|m| m.start() == 0 || line[..m.start()].trim_end().ends_with('?'))
        .map(|m| (m.start(), m.end()))
        .collect();
    if starts.first().is_none_or(|(s, _)| *s != 0) {
        return vec![line];
    }
    starts
        .iter()
        .enumerate()
        .map(|(i, &(_, body))| {
            let end = starts.get(i + 1).map_or(line.len(), |(next, _)| *next);
            line[body..end].trim()
        })
        .collect()
}

fn strip_bullet(item: &str) -> &str {
    item.strip_prefix(['-', '*', '\u{2022}'])
        .map(str::trim_start)
        .unwrap_or(item)
}

/// Parse backend output. Accepts numbered items (one per line or all on one
/// line) and plain lines, with an optional `Subquestion:` header. Parsing
/// stops at a following `Question:` line.
pub fn parse_decomposition(
    original_question: &str,
    raw: &str,
) -> Result<DecompositionPlan, DecomposeError> {
    let mut items = Vec::new();
    for (index, line) in raw.lines().map(str::trim).enumerate() {
        if line.is_empty() {
            continue;
        }
        if line.starts_with("Question:") {
            break;
        }
        let line = match HEADER.find(line) {
            Some(m) if index == 0 || items.is_empty() => &line[m.end()..],
            _ => line,
        };
        for item in split_numbered(line) {
            let item = strip_bullet(item).trim();
            if item.is_empty() {
                continue;
            }
            if !item.ends_with('?') {
                return Err(invalid(format!("line {:?} is not a question", item), raw));
            }
            items.push(item.to_string());
        }
    }
    if items.is_empty() {
        return Err(invalid("no sub-question lines", raw));
    }
    DecompositionPlan::new(original_question, items).map_err(|e| match e {
        DecomposeError::Format { reason, .. } => invalid(reason, raw),
        other => other,
    })
}

/// Fill the divide prompt, ask once, and retry once with the same prompt if
/// the output does not parse.
pub fn decompose(
    question: &str,
    backend: &dyn GenerationBackend,
    template: &PromptTemplate,
) -> Result<DecompositionPlan, DecomposeError> {
    let prompt = template.render(question);
    let first = backend.generate(&prompt)?;
    match parse_decomposition(question, &first) {
        Ok(plan) => Ok(plan),
        Err(DecomposeError::Format { reason, .. }) => {
            tracing::debug!(question, reason, "retrying decomposition");
            let second = backend.generate(&prompt)?;
            parse_decomposition(question, &second)
        }
        Err(other) => Err(other),
    }
}

/// Replace every marker with the previous answer. Markers inside the answer
/// itself are dropped first so none survive.
pub fn instantiate(sub_question: &str, answer: &str) -> Result<String, DecomposeError> {
    if !sub_question.contains(MARKER) {
        return Err(DecomposeError::MissingMarker(sub_question.to_string()));
    }
    let mut filler = answer.to_string();
    while filler.contains(MARKER) {
        filler = filler.replace(MARKER, "");
    }
    Ok(sub_question.replace(MARKER, filler.trim()))
}

/// One dataset hop: its question and the answer that becomes the next hop's
/// subject.
#[derive(Debug, Clone, Copy)]
pub struct HopQuestion<'a> {
    pub question: &'a str,
    pub answer: &'a str,
    pub answer_aliases: &'a [String],
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Replace whole-word, case-insensitive occurrences of the longest matching
/// name with the marker.
fn mask_subject(question: &str, names: &[&str]) -> Option<String> {
    let mut names: Vec<&str> = names
        .iter()
        .map(|n| n.trim())
        .filter(|n| !n.is_empty())
        .collect();
    names.sort_by_key(|n| std::cmp::Reverse(n.chars().count()));
    for name in names {
        let re = Regex::new(&format!("(?i){}", regex::escape(name))).ok()?;
        let hits: Vec<_> = re
            .find_iter(question)
            .filter(|m| {
                !is_word_char(question[..m.start()].chars().next_back())
                    && !is_word_char(question[m.end()..].chars().next())
            })
            .collect();
        if hits.is_empty() {
            continue;
        }
        let mut out = String::with_capacity(question.len());
        let mut last = 0;
        for m in hits {
            out.push_str(&question[last..m.start()]);
            out.push_str(MARKER);
            last = m.end();
        }
        out.push_str(&question[last..]);
        return Some(out);
    }
    None
}

/// Plan from dataset sub-questions: in every hop after the first, the
/// previous hop's answer (or one of its aliases) becomes the marker.
pub fn scripted_decompose(
    original_question: &str,
    hops: &[HopQuestion<'_>],
) -> Result<DecompositionPlan, DecomposeError> {
    if hops.is_empty() {
        return Err(DecomposeError::Data("case has no sub-questions".into()));
    }
    let mut subs = vec![hops[0].question.trim().to_string()];
    for (i, pair) in hops.windows(2).enumerate() {
        let (prev, hop) = (pair[0], pair[1]);
        let mut names = vec![prev.answer];
        names.extend(prev.answer_aliases.iter().map(String::as_str));
        let masked = mask_subject(hop.question.trim(), &names).ok_or_else(|| {
            DecomposeError::Data(format!(
                "hop {} question {:?} does not mention {:?}",
                i + 2,
                hop.question,
                prev.answer
            ))
        })?;
        subs.push(masked);
    }
    DecompositionPlan::new(original_question, subs).map_err(|e| DecomposeError::Data(e.to_string()))
}
