//! Dynamic knowledge graph of edited facts.
//!
//! Facts are indexed `subject -> relation -> fact`. In the default
//! [`ConflictMode::Replace`] mode the index is functional: inserting
//! `(s, r, o_new)` first removes whatever `(s, r, o_old)` was stored and hands
//! it back as [`AddOutcome::Replaced`]. This is the conflict detection and
//! modification step that keeps secondary edits from leaving stale objects
//! reachable.
//!
//! [`ConflictMode::AppendOnly`] exists for ablation runs only: every insert is
//! kept and lookups return the earliest surviving fact for a pair, the way a
//! flat memory scanned front to back would.

mod snapshot;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::normalize::normalize_alias;

pub use snapshot::SNAPSHOT_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("invalid fact: {0}")]
    InvalidFact(String),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("no fact stored for ({subject}, {relation})")]
    NotFound { subject: EntityId, relation: String },
    #[error("alias {alias:?} already belongs to {existing}, cannot assign it to {requested}")]
    AliasCollision {
        alias: String,
        existing: EntityId,
        requested: EntityId,
    },
    #[error("invalid entity: {0}")]
    InvalidEntity(String),
    #[error("snapshot format error: {0}")]
    Format(String),
    #[error("snapshot i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Canonical identifier of an entity node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(GraphError::InvalidEntity("empty entity id".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: EntityId,
    pub canonical_label: String,
    /// Surface forms as registered. Always contains `canonical_label`.
    pub aliases: BTreeSet<String>,
    pub external_ref: Option<String>,
}

/// One stored edit `(s, r, o*)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditedFact {
    pub subject: EntityId,
    pub relation: String,
    pub object: EntityId,
    pub source_text: String,
    pub seq: u64,
}

/// Input to [`KnowledgeGraph::add_fact`]; the sequence number is assigned by
/// the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewFact {
    pub subject: EntityId,
    pub relation: String,
    pub object: EntityId,
    pub source_text: String,
}

impl NewFact {
    pub fn new(
        subject: EntityId,
        relation: impl Into<String>,
        object: EntityId,
        source_text: impl Into<String>,
    ) -> Self {
        Self {
            subject,
            relation: relation.into(),
            object,
            source_text: source_text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddOutcome {
    Inserted,
    Replaced { old: EditedFact },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictMode {
    /// Conflict detection and modification: one fact per `(s, r)`.
    #[default]
    Replace,
    /// Keep every insert; lookups see the earliest one.
    AppendOnly,
}

impl fmt::Display for ConflictMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConflictMode::Replace => f.write_str("replace"),
            ConflictMode::AppendOnly => f.write_str("append-only"),
        }
    }
}

/// Relation labels are compared case-insensitively with collapsed whitespace.
pub fn normalize_relation(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    facts: BTreeMap<EntityId, BTreeMap<String, Vec<EditedFact>>>,
    entities: BTreeMap<EntityId, EntityRecord>,
    alias_index: HashMap<String, EntityId>,
    next_seq: u64,
    next_local: u64,
    mode: ConflictMode,
}

/// Graph shared between concurrent readers with an exclusive writer.
pub type SharedGraph = Arc<RwLock<KnowledgeGraph>>;

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mode(mode: ConflictMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn into_shared(self) -> SharedGraph {
        Arc::new(RwLock::new(self))
    }

    pub fn mode(&self) -> ConflictMode {
        self.mode
    }

    // ---------------------------------------------------------------------
    // Entities
    // ---------------------------------------------------------------------

    /// Register an entity or merge aliases into the entity `label` already
    /// resolves to. Any alias owned by a different entity is a collision.
    pub fn register_entity<S: AsRef<str>>(
        &mut self,
        label: &str,
        aliases: &[S],
        external_ref: Option<&str>,
    ) -> Result<EntityId> {
        let label_key = normalize_alias(label);
        if label_key.is_empty() {
            return Err(GraphError::InvalidEntity(format!(
                "label {label:?} normalizes to nothing"
            )));
        }
        let id = match self.alias_index.get(&label_key) {
            Some(id) => id.clone(),
            None => {
                self.next_local += 1;
                let id = EntityId(format!("local:{:06}", self.next_local));
                self.entities.insert(
                    id.clone(),
                    EntityRecord {
                        id: id.clone(),
                        canonical_label: label.trim().to_string(),
                        aliases: BTreeSet::from([label.trim().to_string()]),
                        external_ref: external_ref.map(str::to_string),
                    },
                );
                self.alias_index.insert(label_key, id.clone());
                id
            }
        };
        for alias in aliases {
            self.add_alias(&id, alias.as_ref())?;
        }
        if let (Some(ext), Some(record)) = (external_ref, self.entities.get_mut(&id)) {
            if record.external_ref.is_none() {
                record.external_ref = Some(ext.to_string());
            }
        }
        Ok(id)
    }

    /// Register an entity under a caller-chosen id (external KB ids).
    pub fn register_entity_with_id<S: AsRef<str>>(
        &mut self,
        id: EntityId,
        label: &str,
        aliases: &[S],
        external_ref: Option<&str>,
    ) -> Result<EntityId> {
        let label_key = normalize_alias(label);
        if label_key.is_empty() {
            return Err(GraphError::InvalidEntity(format!(
                "label {label:?} normalizes to nothing"
            )));
        }
        if let Some(existing) = self.alias_index.get(&label_key) {
            if *existing != id {
                return Err(GraphError::AliasCollision {
                    alias: label.to_string(),
                    existing: existing.clone(),
                    requested: id,
                });
            }
        }
        self.entities
            .entry(id.clone())
            .or_insert_with(|| EntityRecord {
                id: id.clone(),
                canonical_label: label.trim().to_string(),
                aliases: BTreeSet::from([label.trim().to_string()]),
                external_ref: external_ref.map(str::to_string),
            });
        self.alias_index.insert(label_key, id.clone());
        for alias in aliases {
            self.add_alias(&id, alias.as_ref())?;
        }
        Ok(id)
    }

    /// Attach one more surface form to an existing entity.
    pub fn add_alias(&mut self, id: &EntityId, alias: &str) -> Result<()> {
        let key = normalize_alias(alias);
        if key.is_empty() {
            return Err(GraphError::InvalidEntity(format!(
                "alias {alias:?} normalizes to nothing"
            )));
        }
        let record = self
            .entities
            .get_mut(id)
            .ok_or_else(|| GraphError::UnknownEntity(id.clone()))?;
        match self.alias_index.get(&key) {
            Some(existing) if existing != id => Err(GraphError::AliasCollision {
                alias: alias.to_string(),
                existing: existing.clone(),
                requested: id.clone(),
            }),
            Some(_) => {
                record.aliases.insert(alias.trim().to_string());
                Ok(())
            }
            None => {
                record.aliases.insert(alias.trim().to_string());
                self.alias_index.insert(key, id.clone());
                Ok(())
            }
        }
    }

    /// Look a mention up in the alias index without registering anything.
    pub fn resolve(&self, mention: &str) -> Option<&EntityId> {
        self.alias_index.get(&normalize_alias(mention))
    }

    pub fn entity(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.entities.get(id)
    }

    pub fn label(&self, id: &EntityId) -> Option<&str> {
        self.entities.get(id).map(|e| e.canonical_label.as_str())
    }

    pub fn entities(&self) -> impl Iterator<Item = &EntityRecord> {
        self.entities.values()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    /// Normalized alias keys, for surface-form scans over text.
    pub fn alias_keys(&self) -> impl Iterator<Item = &str> {
        self.alias_index.keys().map(String::as_str)
    }

    // ---------------------------------------------------------------------
    // Facts
    // ---------------------------------------------------------------------

    pub fn add_fact(&mut self, fact: NewFact) -> Result<AddOutcome> {
        let relation = normalize_relation(&fact.relation);
        if relation.is_empty() {
            return Err(GraphError::InvalidFact("empty relation".into()));
        }
        for id in [&fact.subject, &fact.object] {
            if id.as_str().trim().is_empty() {
                return Err(GraphError::InvalidFact("empty entity id".into()));
            }
            if !self.entities.contains_key(id) {
                return Err(GraphError::UnknownEntity(id.clone()));
            }
        }

        self.next_seq += 1;
        let stored = EditedFact {
            subject: fact.subject,
            relation: relation.clone(),
            object: fact.object,
            source_text: fact.source_text,
            seq: self.next_seq,
        };
        let slot = self
            .facts
            .entry(stored.subject.clone())
            .or_default()
            .entry(relation)
            .or_default();
        match self.mode {
            ConflictMode::Replace => {
                let old = slot.pop();
                debug_assert!(slot.is_empty());
                slot.push(stored);
                Ok(match old {
                    Some(old) => AddOutcome::Replaced { old },
                    None => AddOutcome::Inserted,
                })
            }
            ConflictMode::AppendOnly => {
                slot.push(stored);
                Ok(AddOutcome::Inserted)
            }
        }
    }

    /// Remove the fact(s) for `(subject, relation)`. Returns the fact that
    /// [`object_of`](Self::object_of) was reporting.
    pub fn remove_fact(&mut self, subject: &EntityId, relation: &str) -> Result<EditedFact> {
        let relation = normalize_relation(relation);
        let not_found = || GraphError::NotFound {
            subject: subject.clone(),
            relation: relation.clone(),
        };
        let by_relation = self.facts.get_mut(subject).ok_or_else(not_found)?;
        let mut removed = by_relation.remove(&relation).ok_or_else(not_found)?;
        if by_relation.is_empty() {
            self.facts.remove(subject);
        }
        Ok(removed.swap_remove(0))
    }

    pub fn contains_subject(&self, subject: &EntityId) -> bool {
        self.facts.contains_key(subject)
    }

    pub fn relations_of(&self, subject: &EntityId) -> BTreeSet<String> {
        self.facts
            .get(subject)
            .map(|m| m.keys().cloned().collect())
            .unwrap_or_default()
    }

    pub fn fact(&self, subject: &EntityId, relation: &str) -> Option<&EditedFact> {
        self.facts
            .get(subject)?
            .get(&normalize_relation(relation))?
            .first()
    }

    pub fn object_of(&self, subject: &EntityId, relation: &str) -> Option<&EntityId> {
        self.fact(subject, relation).map(|f| &f.object)
    }

    /// Every stored fact in `(subject, relation, seq)` order.
    pub fn facts(&self) -> impl Iterator<Item = &EditedFact> {
        self.facts.values().flat_map(|m| m.values().flatten())
    }

    /// Number of stored facts.
    pub fn len(&self) -> usize {
        self.facts
            .values()
            .flat_map(|m| m.values())
            .map(Vec::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    /// Highest sequence number handed out so far.
    pub fn last_seq(&self) -> u64 {
        self.next_seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_with(labels: &[&str]) -> (KnowledgeGraph, Vec<EntityId>) {
        let mut g = KnowledgeGraph::new();
        let ids = labels
            .iter()
            .map(|l| g.register_entity::<&str>(l, &[], None).unwrap())
            .collect();
        (g, ids)
    }

    #[test]
    fn insert_then_lookup() {
        let (mut g, ids) = graph_with(&["Misery", "Richard Dawkins"]);
        let out = g
            .add_fact(NewFact::new(ids[0].clone(), "author", ids[1].clone(), ""))
            .unwrap();
        assert_eq!(out, AddOutcome::Inserted);
        assert_eq!(g.object_of(&ids[0], "author"), Some(&ids[1]));
        assert_eq!(
            g.relations_of(&ids[0]),
            BTreeSet::from(["author".to_string()])
        );
    }

    #[test]
    fn secondary_edit_replaces() {
        let (mut g, ids) = graph_with(&["Brazil", "Asia", "Africa"]);
        g.add_fact(NewFact::new(
            ids[0].clone(),
            "continent",
            ids[1].clone(),
            "",
        ))
        .unwrap();
        let out = g
            .add_fact(NewFact::new(
                ids[0].clone(),
                "continent",
                ids[2].clone(),
                "",
            ))
            .unwrap();
        match out {
            AddOutcome::Replaced { old } => assert_eq!(old.object, ids[1]),
            other => panic!("expected replacement, got {other:?}"),
        }
        assert_eq!(g.object_of(&ids[0], "continent"), Some(&ids[2]));
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn identical_fact_twice_replaces_with_new_seq() {
        let (mut g, ids) = graph_with(&["Brazil", "Africa"]);
        let f = NewFact::new(ids[0].clone(), "continent", ids[1].clone(), "src");
        g.add_fact(f.clone()).unwrap();
        match g.add_fact(f).unwrap() {
            AddOutcome::Replaced { old } => {
                assert_eq!(old.object, ids[1]);
                assert_eq!(old.seq, 1);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(g.fact(&ids[0], "continent").unwrap().seq, 2);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn remove_paths() {
        let (mut g, ids) = graph_with(&["Brazil", "Africa", "Asia"]);
        assert!(matches!(
            g.remove_fact(&ids[0], "continent"),
            Err(GraphError::NotFound { .. })
        ));
        g.add_fact(NewFact::new(
            ids[0].clone(),
            "continent",
            ids[1].clone(),
            "",
        ))
        .unwrap();
        let removed = g.remove_fact(&ids[0], "continent").unwrap();
        assert_eq!(removed.object, ids[1]);
        assert_eq!(g.object_of(&ids[0], "continent"), None);
        assert!(!g.contains_subject(&ids[0]));
        let again = g
            .add_fact(NewFact::new(
                ids[0].clone(),
                "continent",
                ids[2].clone(),
                "",
            ))
            .unwrap();
        assert_eq!(again, AddOutcome::Inserted);
    }

    #[test]
    fn rejects_malformed_and_unregistered() {
        let (mut g, ids) = graph_with(&["Brazil", "Africa"]);
        assert!(matches!(
            g.add_fact(NewFact::new(ids[0].clone(), "  ", ids[1].clone(), "")),
            Err(GraphError::InvalidFact(_))
        ));
        let ghost = EntityId::new("local:999999").unwrap();
        assert!(matches!(
            g.add_fact(NewFact::new(ids[0].clone(), "continent", ghost, "")),
            Err(GraphError::UnknownEntity(_))
        ));
        assert!(EntityId::new("").is_err());
        assert_eq!(g.last_seq(), 0);
    }

    #[test]
    fn alias_resolution_and_collision() {
        let mut g = KnowledgeGraph::new();
        let us = g
            .register_entity("United States", &["U.S.", "USA"], None)
            .unwrap();
        assert_eq!(g.resolve("u.s."), Some(&us));
        assert_eq!(g.resolve("the United States"), Some(&us));
        let uk = g
            .register_entity::<&str>("United Kingdom", &[], None)
            .unwrap();
        let err = g.add_alias(&uk, "USA").unwrap_err();
        assert!(matches!(err, GraphError::AliasCollision { .. }));
        // Re-registering merges instead of duplicating.
        let again = g.register_entity("USA", &["America"], None).unwrap();
        assert_eq!(again, us);
        assert_eq!(g.entity_count(), 2);
        assert!(g.entity(&us).unwrap().aliases.contains("America"));
    }

    #[test]
    fn append_only_keeps_earliest_visible() {
        let mut g = KnowledgeGraph::with_mode(ConflictMode::AppendOnly);
        let b = g.register_entity::<&str>("Brazil", &[], None).unwrap();
        let asia = g.register_entity::<&str>("Asia", &[], None).unwrap();
        let africa = g.register_entity::<&str>("Africa", &[], None).unwrap();
        g.add_fact(NewFact::new(b.clone(), "continent", asia.clone(), ""))
            .unwrap();
        let out = g
            .add_fact(NewFact::new(b.clone(), "continent", africa, ""))
            .unwrap();
        assert_eq!(out, AddOutcome::Inserted);
        assert_eq!(g.len(), 2);
        assert_eq!(g.object_of(&b, "continent"), Some(&asia));
    }

    #[test]
    fn relation_labels_are_case_insensitive() {
        let (mut g, ids) = graph_with(&["Association football", "Brazil"]);
        g.add_fact(NewFact::new(
            ids[0].clone(),
            "Country  of Origin",
            ids[1].clone(),
            "",
        ))
        .unwrap();
        assert_eq!(g.object_of(&ids[0], "country of origin"), Some(&ids[1]));
    }
}
