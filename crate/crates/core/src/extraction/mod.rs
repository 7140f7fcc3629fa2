//! Edit statements to graph facts: triple extraction, entity linking and
//! ingestion with conflict detection.

mod linking;
mod patterns;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::http::{HttpError, HttpSettings, JsonClient};
use crate::kg::{AddOutcome, GraphError, KnowledgeGraph, NewFact};

pub use linking::{link_entity, EntityKb, KbEntity, LinkError, Linker, RemoteKb};
pub use patterns::PatternExtractor;

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("statement has no text and no structured edit")]
    EmptyStatement,
    #[error("statement carries no structured edit")]
    NoStructuredEdit,
    #[error("invalid structured edit: {0}")]
    InvalidEdit(String),
    #[error("extractor backend: {0}")]
    Backend(#[from] HttpError),
}

/// Structured rewrite `(s, r, o -> o*)` as carried by benchmark records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredEdit {
    pub subject: String,
    pub relation: String,
    pub old_object: Option<String>,
    pub new_object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditStatement {
    pub text: String,
    pub hint: Option<StructuredEdit>,
}

impl EditStatement {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            hint: None,
        }
    }

    pub fn structured(edit: StructuredEdit) -> Self {
        let text = match &edit.old_object {
            Some(old) => format!(
                "({}, {}, {} -> {})",
                edit.subject, edit.relation, old, edit.new_object
            ),
            None => format!("({}, {}, {})", edit.subject, edit.relation, edit.new_object),
        };
        Self {
            text,
            hint: Some(edit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedTriple {
    pub subject_mention: String,
    pub relation_label: String,
    pub object_mention: String,
}

impl ExtractedTriple {
    pub fn new(s: impl Into<String>, r: impl Into<String>, o: impl Into<String>) -> Self {
        Self {
            subject_mention: s.into(),
            relation_label: r.into(),
            object_mention: o.into(),
        }
    }

    fn is_complete(&self) -> bool {
        !self.subject_mention.trim().is_empty()
            && !self.relation_label.trim().is_empty()
            && !self.object_mention.trim().is_empty()
    }
}

pub trait TripleExtractor: Send + Sync {
    fn extract(&self, statement: &EditStatement) -> Result<Vec<ExtractedTriple>, ExtractError>;
}

fn triple_from_hint(edit: &StructuredEdit) -> Result<ExtractedTriple, ExtractError> {
    let triple = ExtractedTriple::new(
        edit.subject.trim(),
        edit.relation.trim(),
        edit.new_object.trim(),
    );
    if !triple.is_complete() {
        return Err(ExtractError::InvalidEdit(format!(
            "empty field in ({:?}, {:?}, {:?})",
            edit.subject, edit.relation, edit.new_object
        )));
    }
    Ok(triple)
}

/// Reads structured rewrites directly; the old object never enters the graph.
#[derive(Debug, Clone, Copy, Default)]
pub struct StructuredExtractor;

impl TripleExtractor for StructuredExtractor {
    fn extract(&self, statement: &EditStatement) -> Result<Vec<ExtractedTriple>, ExtractError> {
        match &statement.hint {
            Some(edit) => Ok(vec![triple_from_hint(edit)?]),
            None if statement.text.trim().is_empty() => Err(ExtractError::EmptyStatement),
            None => Err(ExtractError::NoStructuredEdit),
        }
    }
}

#[derive(Serialize)]
struct RemoteExtractRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct RemoteTriple {
    subject: String,
    relation: String,
    object: String,
}

#[derive(Deserialize)]
struct RemoteExtractResponse {
    triples: Vec<RemoteTriple>,
}

/// Relation extraction served over HTTP:
/// `POST {"text": ...}` -> `{"triples": [{"subject", "relation", "object"}]}`.
#[derive(Debug)]
pub struct RemoteExtractor {
    client: JsonClient,
    url: String,
}

impl RemoteExtractor {
    pub fn new(url: impl Into<String>, settings: HttpSettings) -> Result<Self, ExtractError> {
        Ok(Self {
            client: JsonClient::new(settings, None)?,
            url: url.into(),
        })
    }
}

impl TripleExtractor for RemoteExtractor {
    fn extract(&self, statement: &EditStatement) -> Result<Vec<ExtractedTriple>, ExtractError> {
        if let Some(edit) = &statement.hint {
            return Ok(vec![triple_from_hint(edit)?]);
        }
        if statement.text.trim().is_empty() {
            return Err(ExtractError::EmptyStatement);
        }
        let resp: RemoteExtractResponse = self.client.post_json(
            &self.url,
            &RemoteExtractRequest {
                text: &statement.text,
            },
        )?;
        Ok(resp
            .triples
            .into_iter()
            .map(|t| ExtractedTriple::new(t.subject, t.relation, t.object))
            .filter(ExtractedTriple::is_complete)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub statement: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub inserted: usize,
    pub replaced: usize,
    pub failures: Vec<IngestFailure>,
}

impl IngestReport {
    pub fn attempted(&self) -> usize {
        self.inserted + self.replaced + self.failures.len()
    }

    pub fn merge(&mut self, other: IngestReport) {
        self.inserted += other.inserted;
        self.replaced += other.replaced;
        self.failures.extend(other.failures);
    }
}

impl std::fmt::Display for IngestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "inserted {}, replaced {}, failed {}",
            self.inserted,
            self.replaced,
            self.failures.len()
        )
    }
}

#[derive(Debug, thiserror::Error)]
enum TripleError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn ingest_triple(
    graph: &mut KnowledgeGraph,
    triple: &ExtractedTriple,
    source: &str,
    linker: &Linker<'_>,
) -> Result<AddOutcome, TripleError> {
    let subject = linker.link(graph, &triple.subject_mention)?;
    let object = linker.link(graph, &triple.object_mention)?;
    Ok(graph.add_fact(NewFact::new(
        subject,
        triple.relation_label.clone(),
        object,
        source,
    ))?)
}

/// Extract, link and add every statement in order. Failures are recorded per
/// statement (or per triple) and ingestion carries on.
pub fn ingest_edits(
    graph: &mut KnowledgeGraph,
    statements: &[EditStatement],
    extractor: &dyn TripleExtractor,
    linker: &Linker<'_>,
) -> IngestReport {
    let mut report = IngestReport::default();
    for statement in statements {
        let triples = match extractor.extract(statement) {
            Ok(t) if t.is_empty() => {
                report.failures.push(IngestFailure {
                    statement: statement.text.clone(),
                    reason: "no triple extracted".into(),
                });
                continue;
            }
            Ok(t) => t,
            Err(e) => {
                report.failures.push(IngestFailure {
                    statement: statement.text.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        for triple in &triples {
            match ingest_triple(graph, triple, &statement.text, linker) {
                Ok(AddOutcome::Inserted) => report.inserted += 1,
                Ok(AddOutcome::Replaced { .. }) => report.replaced += 1,
                Err(e) => report.failures.push(IngestFailure {
                    statement: statement.text.clone(),
                    reason: format!(
                        "({}, {}, {}): {e}",
                        triple.subject_mention, triple.relation_label, triple.object_mention
                    ),
                }),
            }
        }
    }
    report
}

/// One line of an edit file.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum EditLine {
    Structured {
        s: String,
        r: String,
        #[serde(default)]
        o_old: Option<String>,
        o_new: String,
    },
    Text {
        text: String,
    },
}

/// Parse an edit file: one JSON object per line, either `{"text": ...}` or
/// `{"s", "r", "o_old", "o_new"}`. Unparseable lines come back as failures
/// so the caller can report them alongside ingestion failures.
pub fn parse_edit_lines(content: &str) -> (Vec<EditStatement>, Vec<IngestFailure>) {
    let mut statements = Vec::new();
    let mut failures = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EditLine>(line) {
            Ok(EditLine::Text { text }) => statements.push(EditStatement::text(text)),
            Ok(EditLine::Structured { s, r, o_old, o_new }) => {
                statements.push(EditStatement::structured(StructuredEdit {
                    subject: s,
                    relation: r,
                    old_object: o_old,
                    new_object: o_new,
                }))
            }
            Err(e) => failures.push(IngestFailure {
                statement: line.to_string(),
                reason: format!("line {}: {e}", idx + 1),
            }),
        }
    }
    (statements, failures)
}

pub fn read_edit_file(path: &Path) -> std::io::Result<(Vec<EditStatement>, Vec<IngestFailure>)> {
    Ok(parse_edit_lines(&std::fs::read_to_string(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::InverseTable;

    fn watford_statements() -> Vec<EditStatement> {
        vec![
            EditStatement::text("Association football was created in the country of Brazil."),
            EditStatement::text("Brazil is located in the continent of Africa."),
        ]
    }

    #[test]
    fn structured_hint_yields_new_object_only() {
        let st = EditStatement::structured(StructuredEdit {
            subject: "Brazil".into(),
            relation: "continent".into(),
            old_object: Some("South America".into()),
            new_object: "Asia".into(),
        });
        let triples = StructuredExtractor.extract(&st).unwrap();
        assert_eq!(
            triples,
            vec![ExtractedTriple::new("Brazil", "continent", "Asia")]
        );
        let mut g = KnowledgeGraph::new();
        ingest_edits(&mut g, &[st], &StructuredExtractor, &Linker::local());
        assert!(g.resolve("South America").is_none());
    }

    #[test]
    fn watford_ingest_then_reingest() {
        let ex = PatternExtractor::new(InverseTable::builtin());
        let mut g = KnowledgeGraph::new();
        let first = ingest_edits(&mut g, &watford_statements(), &ex, &Linker::local());
        assert_eq!((first.inserted, first.replaced), (3, 0), "{first:?}");
        let snapshot = g.snapshot();
        let second = ingest_edits(&mut g, &watford_statements(), &ex, &Linker::local());
        assert_eq!((second.inserted, second.replaced), (0, 3));
        assert!(second.failures.is_empty());
        // Content unchanged; only sequence numbers moved.
        let before = KnowledgeGraph::load(&snapshot).unwrap();
        let pairs = |g: &KnowledgeGraph| {
            g.facts()
                .map(|f| (f.subject.clone(), f.relation.clone(), f.object.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(pairs(&before), pairs(&g));
    }

    #[test]
    fn empty_statement_is_a_failure() {
        let mut g = KnowledgeGraph::new();
        let report = ingest_edits(
            &mut g,
            &[EditStatement::text("   ")],
            &PatternExtractor::new(InverseTable::empty()),
            &Linker::local(),
        );
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.attempted(), 1);
        assert!(g.is_empty());
        assert_eq!(g.entity_count(), 0);
    }

    #[test]
    fn edit_file_lines() {
        let content = r#"{"text": "Brazil is located in the continent of Africa."}
{"s": "Brazil", "r": "continent", "o_old": "South America", "o_new": "Asia"}
not json
"#;
        let (statements, failures) = parse_edit_lines(content);
        assert_eq!(statements.len(), 2);
        assert!(statements[1].hint.is_some());
        assert_eq!(failures.len(), 1);
        assert!(failures[0].reason.starts_with("line 3"));
    }
}
