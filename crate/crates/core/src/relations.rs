//! Relation vocabulary: Wikidata property labels, cloze sentence shapes, and
//! the editable key-value tables for paraphrases and inverse relations.

use std::collections::BTreeMap;
use std::path::Path;

use crate::kg::normalize_relation;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: expected `key = value`, got {text:?}")]
    Syntax {
        source_name: String,
        line: usize,
        text: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A relation the pattern extractor knows how to read out of a sentence.
#[derive(Debug, Clone, Copy)]
pub struct RelationSpec {
    pub property: &'static str,
    pub label: &'static str,
    /// Sentence shapes with `{s}` and `{o}` slots.
    pub patterns: &'static [&'static str],
}

pub const CATALOG: &[RelationSpec] = &[
    RelationSpec {
        property: "P30",
        label: "continent",
        patterns: &[
            "{s} is located in the continent of {o}",
            "{s} is located in the continent {o}",
        ],
    },
    RelationSpec {
        property: "P36",
        label: "capital",
        patterns: &[
            "The capital of {s} is {o}",
            "The capital city of {s} is {o}",
        ],
    },
    RelationSpec {
        property: "P35",
        label: "head of state",
        patterns: &[
            "The name of the current head of state in {s} is {o}",
            "The head of state of {s} is {o}",
        ],
    },
    RelationSpec {
        property: "P6",
        label: "head of government",
        patterns: &[
            "The name of the current head of the {s} government is {o}",
            "The head of government of {s} is {o}",
        ],
    },
    RelationSpec {
        property: "P17",
        label: "country",
        patterns: &["{s} is located in the country of {o}"],
    },
    RelationSpec {
        property: "P19",
        label: "place of birth",
        patterns: &["{s} was born in the city of {o}", "{s} was born in {o}"],
    },
    RelationSpec {
        property: "P20",
        label: "place of death",
        patterns: &["{s} died in the city of {o}", "{s} died in {o}"],
    },
    RelationSpec {
        property: "P27",
        label: "country of citizenship",
        patterns: &["{s} is a citizen of {o}"],
    },
    RelationSpec {
        property: "P26",
        label: "spouse",
        patterns: &["{s} is married to {o}"],
    },
    RelationSpec {
        property: "P37",
        label: "official language",
        patterns: &["The official language of {s} is {o}"],
    },
    RelationSpec {
        property: "P38",
        label: "currency",
        patterns: &["The currency of {s} is {o}"],
    },
    RelationSpec {
        property: "P50",
        label: "author",
        patterns: &["The author of {s} is {o}", "{s} was written by {o}"],
    },
    RelationSpec {
        property: "P108",
        label: "employer",
        patterns: &["{s} is employed by {o}", "{s} works for {o}"],
    },
    RelationSpec {
        property: "P112",
        label: "founded by",
        patterns: &["{s} was founded by {o}"],
    },
    RelationSpec {
        property: "P136",
        label: "genre",
        patterns: &[
            "The type of music that {s} plays is {o}",
            "The genre of {s} is {o}",
        ],
    },
    RelationSpec {
        property: "P140",
        label: "religion",
        patterns: &["{s} is affiliated with the religion of {o}"],
    },
    RelationSpec {
        property: "P159",
        label: "headquarters location",
        patterns: &[
            "The headquarters of {s} is located in the city of {o}",
            "The headquarters of {s} is in {o}",
        ],
    },
    RelationSpec {
        property: "P169",
        label: "chief executive officer",
        patterns: &["The chief executive officer of {s} is {o}"],
    },
    RelationSpec {
        property: "P175",
        label: "performer",
        patterns: &["{s} was performed by {o}"],
    },
    RelationSpec {
        property: "P176",
        label: "manufacturer",
        patterns: &[
            "The company that produced {s} is {o}",
            "{s} was produced by {o}",
        ],
    },
    RelationSpec {
        property: "P264",
        label: "record label",
        patterns: &["{s} is represented by the music label {o}"],
    },
    RelationSpec {
        property: "P286",
        label: "head coach",
        patterns: &["The head coach of {s} is {o}"],
    },
    RelationSpec {
        property: "P407",
        label: "language of work or name",
        patterns: &["{s} was written in the language of {o}"],
    },
    RelationSpec {
        property: "P413",
        label: "position played on team",
        patterns: &["{s} plays the position of {o}"],
    },
    RelationSpec {
        property: "P449",
        label: "original broadcaster",
        patterns: &[
            "{s} was originally aired on {o}",
            "{s} was originally broadcast by {o}",
        ],
    },
    RelationSpec {
        property: "P495",
        label: "country of origin",
        patterns: &[
            "{s} was created in the country of {o}",
            "{s} originated in the country of {o}",
        ],
    },
    RelationSpec {
        property: "P641",
        label: "sport",
        patterns: &["{s} is associated with the sport of {o}"],
    },
    RelationSpec {
        property: "P740",
        label: "location of formation",
        patterns: &[
            "{s} was founded in the city of {o}",
            "{s} was formed in the city of {o}",
        ],
    },
    RelationSpec {
        property: "P1412",
        label: "languages spoken, written or signed",
        patterns: &["{s} speaks the language of {o}"],
    },
    RelationSpec {
        property: "P106",
        label: "occupation",
        patterns: &["The occupation of {s} is {o}"],
    },
    RelationSpec {
        property: "P101",
        label: "field of work",
        patterns: &["{s} works in the field of {o}"],
    },
    RelationSpec {
        property: "P488",
        label: "chairperson",
        patterns: &["The chairperson of {s} is {o}"],
    },
    RelationSpec {
        property: "P800",
        label: "notable work",
        patterns: &["{s} is famous for {o}", "{s} is known for {o}"],
    },
    RelationSpec {
        property: "P69",
        label: "educated at",
        patterns: &["{s} was educated at {o}"],
    },
    RelationSpec {
        property: "P54",
        label: "member of sports team",
        patterns: &["{s} plays for {o}"],
    },
    RelationSpec {
        property: "P127",
        label: "owned by",
        patterns: &["{s} is owned by {o}"],
    },
    RelationSpec {
        property: "P57",
        label: "director",
        patterns: &["{s} was directed by {o}"],
    },
    RelationSpec {
        property: "P1037",
        label: "director / manager",
        patterns: &["The director of {s} is {o}"],
    },
];

/// Label for a Wikidata property id, when it is in the catalog.
pub fn label_for_property(property: &str) -> Option<&'static str> {
    CATALOG
        .iter()
        .find(|spec| spec.property.eq_ignore_ascii_case(property))
        .map(|spec| spec.label)
}

pub const DEFAULT_PARAPHRASES: &str = include_str!("../data/paraphrases.txt");
pub const DEFAULT_INVERSES: &str = include_str!("../data/inverse_relations.txt");

/// Parse `key = value | value` lines. `#` starts a comment.
pub fn parse_key_values(
    text: &str,
    source_name: &str,
) -> Result<Vec<(String, Vec<String>)>, ConfigError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                source_name: source_name.to_string(),
                line: idx + 1,
                text: raw.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                source_name: source_name.to_string(),
                line: idx + 1,
                text: raw.to_string(),
            });
        }
        let values = value
            .split('|')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::to_string)
            .collect();
        out.push((key.to_string(), values));
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Relation label -> phrasings that signal it in a question.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParaphraseTable {
    entries: BTreeMap<String, Vec<String>>,
}

impl ParaphraseTable {
    pub fn parse(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (key, values) in parse_key_values(text, source_name)? {
            entries
                .entry(normalize_relation(&key))
                .or_default()
                .extend(values);
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read_file(path)?, &path.display().to_string())
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_PARAPHRASES, "paraphrases.txt").expect("built-in table parses")
    }

    pub fn phrases(&self, relation: &str) -> &[String] {
        self.entries
            .get(&normalize_relation(relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Relation label -> label of the companion triple with subject and object
/// swapped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InverseTable {
    entries: BTreeMap<String, String>,
}

impl InverseTable {
    pub fn parse(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (key, values) in parse_key_values(text, source_name)? {
            if let Some(inverse) = values.into_iter().next() {
                entries.insert(normalize_relation(&key), inverse);
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read_file(path)?, &path.display().to_string())
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_INVERSES, "inverse_relations.txt").expect("built-in table parses")
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn inverse_of(&self, relation: &str) -> Option<&str> {
        self.entries
            .get(&normalize_relation(relation))
            .map(String::as_str)
    }
}
