//! Text generation backends: an OpenAI-compatible chat-completions client, a
//! closed-world oracle fact table and a scripted replay queue.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::decomposer::PromptTemplate;
use crate::http::{HttpError, HttpSettings, JsonClient};
use crate::normalize::normalize_answer;

pub const DEFAULT_CREDENTIAL_ENV: &str = "KGEDIT_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error(transparent)]
    Http(#[from] HttpError),
    #[error("oracle has no answer for question {0:?}")]
    UnknownQuestion(String),
    #[error("scripted backend exhausted after {served} responses")]
    ScriptExhausted { served: usize },
    #[error("environment variable {0} with the API credential is not set")]
    MissingCredential(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend returned an empty completion")]
    EmptyResponse,
    #[error("retrieved fact label is empty")]
    EmptyFact,
}

pub trait GenerationBackend: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Remote,
    #[default]
    Oracle,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    /// Name of the environment variable holding the bearer token.
    pub credential_env: String,
    /// Oracle table (JSON object question -> answer) or script (JSON array).
    pub source: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let http = HttpSettings::default();
        Self {
            kind: BackendKind::default(),
            endpoint: None,
            model_name: "gpt-3.5-turbo-instruct".into(),
            temperature: 0.0,
            max_tokens: Some(256),
            max_retries: http.max_retries,
            timeout_secs: http.timeout.as_secs(),
            max_in_flight: http.max_in_flight,
            credential_env: DEFAULT_CREDENTIAL_ENV.into(),
            source: None,
        }
    }
}

impl BackendConfig {
    pub fn http_settings(&self) -> HttpSettings {
        HttpSettings {
            timeout: Duration::from_secs(self.timeout_secs),
            max_retries: self.max_retries,
            max_in_flight: self.max_in_flight,
            ..HttpSettings::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        match self.kind {
            BackendKind::Remote if self.endpoint.as_deref().is_none_or(str::is_empty) => Err(
                BackendError::Config("remote backend requires an endpoint".into()),
            ),
            BackendKind::Scripted if self.source.is_none() => Err(BackendError::Config(
                "scripted backend requires a script file".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Build the configured backend. The oracle falls back to `oracle` when
    /// no table file is configured.
    pub fn build(
        &self,
        oracle: Option<OracleFactTable>,
    ) -> Result<Box<dyn GenerationBackend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Remote => {
                let credential = std::env::var(&self.credential_env)
                    .ok()
                    .filter(|v| !v.is_empty())
                    .ok_or_else(|| BackendError::MissingCredential(self.credential_env.clone()))?;
                Box::new(RemoteChatBackend::new(
                    self.endpoint.as_deref().unwrap_or_default(),
                    &self.model_name,
                    self.temperature,
                    self.max_tokens,
                    self.http_settings(),
                    Some(credential),
                )?)
            }
            BackendKind::Oracle => {
                let table = match (&self.source, oracle) {
                    (Some(path), _) => OracleFactTable::from_file(path)?,
                    (None, Some(table)) => table,
                    (None, None) => {
                        return Err(BackendError::Config(
                            "oracle backend needs a fact table".into(),
                        ))
                    }
                };
                Box::new(OracleBackend::new(table))
            }
            BackendKind::Scripted => Box::new(ScriptedBackend::from_file(
                self.source.as_deref().expect("validated"),
            )?),
        })
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug)]
pub struct RemoteChatBackend {
    client: JsonClient,
    url: String,
    model: String,
    temperature: f64,
    max_tokens: Option<u32>,
}

pub fn completions_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else if base.ends_with("/v1") {
        format!("{base}/chat/completions")
    } else {
        format!("{base}/v1/chat/completions")
    }
}

impl RemoteChatBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        temperature: f64,
        max_tokens: Option<u32>,
        settings: HttpSettings,
        credential: Option<String>,
    ) -> Result<Self, BackendError> {
        Ok(Self {
            client: JsonClient::new(settings, credential)?,
            url: completions_url(endpoint),
            model: model.to_string(),
            temperature,
            max_tokens,
        })
    }
}

impl GenerationBackend for RemoteChatBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let request = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        };
        let resp: ChatResponse = self.client.post_json(&self.url, &request)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(BackendError::EmptyResponse)
    }
}

/// Closed-world question -> answer table keyed by normalized question text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleFactTable {
    entries: HashMap<String, String>,
}

impl OracleFactTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Later insertions for the same normalized question win.
    pub fn insert(&mut self, question: &str, answer: impl Into<String>) {
        self.entries
            .insert(normalize_answer(question), answer.into());
    }

    pub fn get(&self, question: &str) -> Option<&str> {
        self.entries
            .get(&normalize_answer(question))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let raw: HashMap<String, String> = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Ok(raw.into_iter().collect())
    }
}

impl<Q: AsRef<str>, A: Into<String>> FromIterator<(Q, A)> for OracleFactTable {
    fn from_iter<T: IntoIterator<Item = (Q, A)>>(iter: T) -> Self {
        let mut table = Self::new();
        for (q, a) in iter {
            table.insert(q.as_ref(), a);
        }
        table
    }
}

/// The question a prompt asks: the text after its last `Question:` line, or
/// the whole prompt when there is none.
pub fn question_in_prompt(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|line| line.trim().strip_prefix("Question:"))
        .unwrap_or(prompt)
        .trim()
}

#[derive(Debug, Clone)]
pub struct OracleBackend {
    table: OracleFactTable,
}

impl OracleBackend {
    pub fn new(table: OracleFactTable) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &OracleFactTable {
        &self.table
    }
}

impl GenerationBackend for OracleBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let question = question_in_prompt(prompt);
        self.table
            .get(question)
            .map(str::to_string)
            .ok_or_else(|| BackendError::UnknownQuestion(question.to_string()))
    }
}

/// Replays queued responses in order and records every prompt it receives.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    state: Mutex<ScriptState>,
}

#[derive(Debug, Default)]
struct ScriptState {
    queue: VecDeque<String>,
    served: usize,
    prompts: Vec<String>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self {
            state: Mutex::new(ScriptState {
                queue: responses.into_iter().map(Into::into).collect(),
                ..ScriptState::default()
            }),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let responses: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        Ok(Self::new(responses))
    }

    pub fn prompts(&self) -> Vec<String> {
        self.state.lock().prompts.clone()
    }

    pub fn remaining(&self) -> usize {
        self.state.lock().queue.len()
    }
}

impl GenerationBackend for ScriptedBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let mut state = self.state.lock();
        state.prompts.push(prompt.to_string());
        let served = state.served;
        let next = state
            .queue
            .pop_front()
            .ok_or(BackendError::ScriptExhausted { served })?;
        state.served += 1;
        Ok(next)
    }
}

/// Reduce a free-form completion to the answer phrase: first non-empty line,
/// without an `Answer:` prefix or a closing period. A period that ends a
/// dotted abbreviation ("F.C.") is kept.
const ABBREVIATIONS: &[&str] = &["Inc", "Ltd", "Co", "Corp", "Jr", "Sr", "St", "Bros"];

pub fn clean_generation(text: &str) -> String {
    let line = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("");
    let line = line.strip_prefix("Answer:").unwrap_or(line).trim();
    match line.strip_suffix('.') {
        Some(rest) => {
            let last_word = rest.rsplit(char::is_whitespace).next().unwrap_or("");
            if last_word.contains('.') || ABBREVIATIONS.contains(&last_word) {
                line.to_string()
            } else {
                rest.trim_end().to_string()
            }
        }
        None => line.to_string(),
    }
}

/// How a retrieved object becomes the hop answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalAnswerMode {
    /// The canonical label, verbatim.
    #[default]
    Deterministic,
    /// Ask the backend with the fact in the retrieval prompt.
    Llm,
}

pub fn answer_with_fact(
    backend: &dyn GenerationBackend,
    question: &str,
    fact_label: &str,
    mode: RetrievalAnswerMode,
    template: &PromptTemplate,
) -> Result<String, BackendError> {
    if fact_label.trim().is_empty() {
        return Err(BackendError::EmptyFact);
    }
    match mode {
        RetrievalAnswerMode::Deterministic => Ok(fact_label.to_string()),
        RetrievalAnswerMode::Llm => {
            let prompt = template.render_with_fact(question, fact_label);
            let answer = clean_generation(&backend.generate(&prompt)?);
            if answer.is_empty() {
                return Err(BackendError::EmptyResponse);
            }
            Ok(answer)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposer::TemplateKind;

    #[test]
    fn oracle_answers_normalized_question() {
        let table: OracleFactTable = [(
            "which sport is watford f.c. associated with?",
            "Association Football (Soccer)",
        )]
        .into_iter()
        .collect();
        let oracle = OracleBackend::new(table);
        let prompt = PromptTemplate::builtin(TemplateKind::Answer)
            .render("Which sport is Watford F.C. associated with?");
        assert_eq!(
            oracle.generate(&prompt).unwrap(),
            "Association Football (Soccer)"
        );
        assert!(matches!(
            oracle.generate("Question: Who is Brazil's head of state?"),
            Err(BackendError::UnknownQuestion(q)) if q == "Who is Brazil's head of state?"
        ));
    }

    #[test]
    fn scripted_replays_then_exhausts() {
        let b = ScriptedBackend::new(["a", "b"]);
        assert_eq!(b.generate("p1").unwrap(), "a");
        assert_eq!(b.generate("p2").unwrap(), "b");
        assert!(matches!(
            b.generate("p3"),
            Err(BackendError::ScriptExhausted { served: 2 })
        ));
        assert_eq!(b.prompts(), vec!["p1", "p2", "p3"]);
    }

    #[test]
    fn deterministic_fact_passthrough() {
        let b = ScriptedBackend::new(Vec::<String>::new());
        let t = PromptTemplate::builtin(TemplateKind::Retrieve);
        for q in ["Which continent is Brazil located in?", "anything at all"] {
            assert_eq!(
                answer_with_fact(&b, q, "Africa", RetrievalAnswerMode::Deterministic, &t).unwrap(),
                "Africa"
            );
        }
        assert!(matches!(
            answer_with_fact(&b, "q", " ", RetrievalAnswerMode::Deterministic, &t),
            Err(BackendError::EmptyFact)
        ));
        assert_eq!(b.remaining(), 0);
        assert!(b.prompts().is_empty());
    }

    #[test]
    fn llm_fact_mode_uses_retrieve_prompt() {
        let b = ScriptedBackend::new(["Brazil is located in Africa."]);
        let t = PromptTemplate::builtin(TemplateKind::Retrieve);
        let out = answer_with_fact(
            &b,
            "Which continent is Brazil located in?",
            "Africa",
            RetrievalAnswerMode::Llm,
            &t,
        )
        .unwrap();
        assert_eq!(out, "Brazil is located in Africa");
        let prompt = &b.prompts()[0];
        assert!(prompt.contains("Retrieved fact: Africa"));
        assert!(prompt.ends_with("Question: Which continent is Brazil located in?"));
    }

    #[test]
    fn generation_cleanup() {
        assert_eq!(clean_generation("Answer: Paris.\nQuestion: x"), "Paris");
        assert_eq!(clean_generation("\n  Watford F.C.\n"), "Watford F.C.");
        assert_eq!(clean_generation("Jupiter"), "Jupiter");
        assert_eq!(clean_generation("Apple Inc."), "Apple Inc.");
        assert_eq!(clean_generation(""), "");
    }

    #[test]
    fn completions_url_forms() {
        assert_eq!(
            completions_url("http://h:1"),
            "http://h:1/v1/chat/completions"
        );
        assert_eq!(
            completions_url("http://h:1/v1/"),
            "http://h:1/v1/chat/completions"
        );
        assert_eq!(
            completions_url("http://h/v1/chat/completions"),
            "http://h/v1/chat/completions"
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = BackendConfig {
            kind: BackendKind::Remote,
            ..BackendConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.endpoint = Some("http://localhost:1".into());
        assert!(cfg.validate().is_ok());
        cfg.temperature = -1.0;
        assert!(cfg.validate().is_err());
        cfg.temperature = f64::NAN;
        assert!(cfg.validate().is_err());
    }
}
