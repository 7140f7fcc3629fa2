//! MQuAKE-format case records.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::OracleFactTable;
use crate::decomposer::{scripted_decompose, DecomposeError, DecompositionPlan, HopQuestion};
use crate::extraction::{EditStatement, StructuredEdit};
use crate::normalize::normalize_alias;
use crate::relations::label_for_property;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset is not a JSON array of cases: {0}")]
    Json(String),
    #[error("case #{index} (id {case_id}): {message}")]
    Schema {
        index: usize,
        case_id: String,
        message: String,
    },
}

#[derive(Deserialize)]
struct RawTarget {
    str: String,
}

#[derive(Deserialize)]
struct RawRewrite {
    #[serde(default)]
    prompt: String,
    relation_id: String,
    target_new: RawTarget,
    target_true: RawTarget,
    subject: String,
    #[serde(default)]
    question: Option<String>,
}

#[derive(Deserialize)]
struct RawHop {
    question: String,
    answer: String,
    #[serde(default)]
    answer_alias: Vec<String>,
}

#[derive(Deserialize, Default)]
struct RawOrig {
    #[serde(default)]
    triples_labeled: Vec<[String; 3]>,
    #[serde(default)]
    new_triples_labeled: Vec<[String; 3]>,
}

#[derive(Deserialize)]
struct RawCase {
    case_id: serde_json::Value,
    requested_rewrite: Vec<RawRewrite>,
    questions: Vec<String>,
    #[serde(default)]
    answer: Option<String>,
    #[serde(default)]
    answer_alias: Vec<String>,
    new_answer: String,
    #[serde(default)]
    new_answer_alias: Vec<String>,
    single_hops: Vec<RawHop>,
    new_single_hops: Vec<RawHop>,
    #[serde(default)]
    orig: RawOrig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl From<[String; 3]> for LabeledTriple {
    fn from([subject, relation, object]: [String; 3]) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }
}

/// A requested edit `(s, r, o -> o*)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rewrite {
    pub subject: String,
    pub relation_id: String,
    pub relation: String,
    pub old_object: String,
    pub new_object: String,
    /// Cloze prompt with a `{}` subject slot.
    pub prompt: String,
    pub question: Option<String>,
}

impl Rewrite {
    /// Natural-language form, e.g. "Brazil is located in the continent of Africa."
    pub fn sentence(&self) -> String {
        let head = if self.prompt.contains("{}") {
            self.prompt.replace("{}", &self.subject)
        } else {
            format!("{} {}", self.subject, self.relation)
        };
        format!("{} {}.", head.trim_end(), self.new_object)
    }

    pub fn statement(&self) -> EditStatement {
        let mut statement = EditStatement::structured(StructuredEdit {
            subject: self.subject.clone(),
            relation: self.relation.clone(),
            old_object: Some(self.old_object.clone()),
            new_object: self.new_object.clone(),
        });
        statement.text = self.sentence();
        statement
    }

    pub fn text_statement(&self) -> EditStatement {
        EditStatement::text(self.sentence())
    }

    fn same_slot(&self, triple: &LabeledTriple) -> bool {
        normalize_alias(&self.subject) == normalize_alias(&triple.subject)
            && crate::kg::normalize_relation(&self.relation)
                == crate::kg::normalize_relation(&triple.relation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub question: String,
    pub answer: String,
    pub aliases: Vec<String>,
    pub triple: Option<LabeledTriple>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MQuakeCase {
    pub case_id: String,
    pub multi_hop_questions: Vec<String>,
    pub rewrites: Vec<Rewrite>,
    pub original_hops: Vec<Hop>,
    pub new_hops: Vec<Hop>,
    pub original_answer: Option<String>,
    pub original_answer_aliases: Vec<String>,
    pub new_answer: String,
    pub new_answer_aliases: Vec<String>,
}

/// One step of the post-edit chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoldStep {
    pub sub_question: String,
    pub answer: String,
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoldenPath {
    pub steps: Vec<GoldStep>,
    /// Links where hop `i`'s answer does not appear in hop `i + 1`'s question.
    pub warnings: Vec<String>,
}

fn mentions(question: &str, name: &str) -> bool {
    let name = normalize_alias(name);
    !name.is_empty() && question.to_lowercase().contains(&name)
}

impl MQuakeCase {
    pub fn hop_count(&self) -> usize {
        self.new_hops.len()
    }

    pub fn edit_count(&self) -> usize {
        self.rewrites.len()
    }

    pub fn edit_statements(&self) -> Vec<EditStatement> {
        self.rewrites.iter().map(Rewrite::statement).collect()
    }

    /// Subject of new hop `i` with its aliases: the first hop's triple
    /// subject, then each previous hop's answer.
    pub fn hop_subject(&self, i: usize) -> Option<(String, Vec<String>)> {
        if i == 0 {
            return self.new_hops[0]
                .triple
                .as_ref()
                .map(|t| (t.subject.clone(), Vec::new()));
        }
        self.new_hops
            .get(i - 1)
            .map(|prev| (prev.answer.clone(), prev.aliases.clone()))
    }

    /// Index of the rewrite that a new hop applies, if any.
    pub fn rewrite_for_hop(&self, i: usize) -> Option<&Rewrite> {
        let hop = &self.new_hops[i];
        if let Some(triple) = &hop.triple {
            return self.rewrites.iter().find(|r| {
                r.same_slot(triple)
                    && normalize_alias(&r.new_object) == normalize_alias(&triple.object)
            });
        }
        let q = normalize_alias(&hop.question);
        self.rewrites
            .iter()
            .find(|r| r.question.as_deref().map(normalize_alias).as_deref() == Some(q.as_str()))
    }

    pub fn is_edited_hop(&self, i: usize) -> bool {
        self.rewrite_for_hop(i).is_some()
    }

    pub fn golden_path(&self) -> GoldenPath {
        let steps = self
            .new_hops
            .iter()
            .map(|h| GoldStep {
                sub_question: h.question.clone(),
                answer: h.answer.clone(),
                aliases: h.aliases.clone(),
            })
            .collect();
        let warnings = self
            .new_hops
            .windows(2)
            .enumerate()
            .filter(|(_, pair)| {
                let (prev, next) = (&pair[0], &pair[1]);
                !std::iter::once(&prev.answer)
                    .chain(&prev.aliases)
                    .any(|name| mentions(&next.question, name))
            })
            .map(|(i, pair)| {
                format!(
                    "case {}: hop {} answer {:?} is not the subject of hop {} ({:?})",
                    self.case_id,
                    i + 1,
                    pair[0].answer,
                    i + 2,
                    pair[1].question
                )
            })
            .collect();
        GoldenPath { steps, warnings }
    }

    /// Plan from the dataset's post-edit sub-questions.
    pub fn scripted_plan(&self, phrasing: &str) -> Result<DecompositionPlan, DecomposeError> {
        let hops: Vec<HopQuestion<'_>> = self
            .new_hops
            .iter()
            .map(|h| HopQuestion {
                question: &h.question,
                answer: &h.answer,
                answer_aliases: &h.aliases,
            })
            .collect();
        scripted_decompose(phrasing, &hops).map_err(|e| match e {
            DecomposeError::Data(msg) => {
                DecomposeError::Data(format!("case {}: {msg}", self.case_id))
            }
            other => other,
        })
    }
}

fn relation_label(rewrite: &RawRewrite, orig: &RawOrig) -> String {
    let subject = normalize_alias(&rewrite.subject);
    let object = normalize_alias(&rewrite.target_new.str);
    orig.new_triples_labeled
        .iter()
        .find(|[s, _, o]| normalize_alias(s) == subject && normalize_alias(o) == object)
        .map(|[_, r, _]| r.clone())
        .or_else(|| label_for_property(&rewrite.relation_id).map(str::to_string))
        .unwrap_or_else(|| rewrite.relation_id.clone())
}

fn hops(raw: Vec<RawHop>, triples: &[[String; 3]]) -> Vec<Hop> {
    let attach = triples.len() == raw.len();
    raw.into_iter()
        .enumerate()
        .map(|(i, h)| Hop {
            question: h.question,
            answer: h.answer,
            aliases: h.answer_alias,
            triple: attach.then(|| triples[i].clone().into()),
        })
        .collect()
}

fn case_id_string(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn convert(index: usize, value: serde_json::Value) -> Result<MQuakeCase, DatasetError> {
    let case_id = value
        .get("case_id")
        .map(case_id_string)
        .unwrap_or_else(|| "?".into());
    let schema = |message: String| DatasetError::Schema {
        index,
        case_id: case_id.clone(),
        message,
    };
    let raw: RawCase = serde_json::from_value(value).map_err(|e| schema(e.to_string()))?;
    let rewrites: Vec<Rewrite> = raw
        .requested_rewrite
        .iter()
        .map(|r| Rewrite {
            subject: r.subject.clone(),
            relation_id: r.relation_id.clone(),
            relation: relation_label(r, &raw.orig),
            old_object: r.target_true.str.clone(),
            new_object: r.target_new.str.clone(),
            prompt: r.prompt.clone(),
            question: r.question.clone(),
        })
        .collect();
    let case = MQuakeCase {
        case_id: case_id_string(&raw.case_id),
        multi_hop_questions: raw.questions,
        original_hops: hops(raw.single_hops, &raw.orig.triples_labeled),
        new_hops: hops(raw.new_single_hops, &raw.orig.new_triples_labeled),
        rewrites,
        original_answer: raw.answer,
        original_answer_aliases: raw.answer_alias,
        new_answer: raw.new_answer,
        new_answer_aliases: raw.new_answer_alias,
    };
    if case.multi_hop_questions.is_empty() {
        return Err(schema("field `questions` is empty".into()));
    }
    if !(2..=4).contains(&case.hop_count()) {
        return Err(schema(format!(
            "field `new_single_hops` has {} hops, expected 2 to 4",
            case.hop_count()
        )));
    }
    if case.original_hops.len() != case.hop_count() {
        return Err(schema(format!(
            "field `single_hops` has {} hops but `new_single_hops` has {}",
            case.original_hops.len(),
            case.hop_count()
        )));
    }
    if !(1..=4).contains(&case.edit_count()) {
        return Err(schema(format!(
            "field `requested_rewrite` has {} edits, expected 1 to 4",
            case.edit_count()
        )));
    }
    Ok(case)
}

pub fn parse_dataset(text: &str) -> Result<Vec<MQuakeCase>, DatasetError> {
    let values: Vec<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| DatasetError::Json(e.to_string()))?;
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| convert(i, v))
        .collect()
}

pub fn load_dataset(path: &Path) -> Result<Vec<MQuakeCase>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

/// Case counts by hop count and by edit count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub total: usize,
    pub by_hops: BTreeMap<usize, usize>,
    pub by_edits: BTreeMap<usize, usize>,
    /// `(edits, hops) -> cases`.
    #[serde(skip)]
    pub by_edits_and_hops: BTreeMap<(usize, usize), usize>,
}

impl DatasetSummary {
    pub fn of(cases: &[MQuakeCase]) -> Self {
        let mut s = Self::default();
        for c in cases {
            s.total += 1;
            *s.by_hops.entry(c.hop_count()).or_default() += 1;
            *s.by_edits.entry(c.edit_count()).or_default() += 1;
            *s.by_edits_and_hops
                .entry((c.edit_count(), c.hop_count()))
                .or_default() += 1;
        }
        s
    }

    fn from_table(rows: &[(usize, [usize; 3])]) -> Self {
        let mut s = Self::default();
        for &(edits, counts) in rows {
            for (hops, n) in (2..=4).zip(counts) {
                if n == 0 {
                    continue;
                }
                s.total += n;
                *s.by_hops.entry(hops).or_default() += n;
                *s.by_edits.entry(edits).or_default() += n;
                s.by_edits_and_hops.insert((edits, hops), n);
            }
        }
        s
    }

    /// Published statistics of MQuAKE-CF-3K.
    pub fn published_cf3k() -> Self {
        Self::from_table(&[
            (1, [513, 356, 224]),
            (2, [487, 334, 246]),
            (3, [0, 310, 262]),
            (4, [0, 0, 268]),
        ])
    }

    /// Published statistics of MQuAKE-T.
    pub fn published_t() -> Self {
        Self::from_table(&[(1, [1421, 445, 2])])
    }
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} cases", self.total)?;
        for (hops, n) in &self.by_hops {
            writeln!(f, "  {hops}-hop: {n}")?;
        }
        for (edits, n) in &self.by_edits {
            writeln!(f, "  {edits} edit(s): {n}")?;
        }
        Ok(())
    }
}

/// Which stand-in for the base model's knowledge to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// The unedited world: original facts, so edited hops answer with the
    /// old object unless the graph supplies the new one.
    #[default]
    World,
    /// Every post-edit hop answered correctly; needs no graph at all.
    Gold,
}

/// Question -> answer table over all cases.
///
/// World tables are filled in three passes so that a fact stated by any
/// case's original chain wins over an old object implied by an edit:
/// original hops, unedited new hops, then old objects of edited hops only
/// where the question is still unknown.
pub fn build_oracle(cases: &[MQuakeCase], kind: OracleKind) -> OracleFactTable {
    let mut table = OracleFactTable::new();
    match kind {
        OracleKind::Gold => {
            for hop in cases.iter().flat_map(|c| &c.new_hops) {
                table.insert(&hop.question, hop.answer.clone());
            }
        }
        OracleKind::World => {
            for hop in cases.iter().flat_map(|c| &c.original_hops) {
                table.insert(&hop.question, hop.answer.clone());
            }
            for case in cases {
                for (i, hop) in case.new_hops.iter().enumerate() {
                    if !case.is_edited_hop(i) {
                        table.insert(&hop.question, hop.answer.clone());
                    }
                }
            }
            for case in cases {
                for (i, hop) in case.new_hops.iter().enumerate() {
                    if let Some(rewrite) = case.rewrite_for_hop(i) {
                        if table.get(&hop.question).is_none() {
                            table.insert(&hop.question, rewrite.old_object.clone());
                        }
                    }
                }
            }
        }
    }
    table
}
