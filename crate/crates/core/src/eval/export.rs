//! Training sets for the entity detector, the relation detector and the
//! decomposition model.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{match_answer, partition_batches, EditBatchSpec, GraphBuilder, MQuakeCase};
use crate::decomposer::DecomposeError;
use crate::detectors::Detectors;
use crate::kg::{normalize_relation, KnowledgeGraph};
use crate::normalize::normalize_alias;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub question: String,
    pub candidate: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRecord {
    pub question: String,
    pub relation: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub question: String,
    pub sub_questions: Vec<String>,
    /// Sub-questions joined by newlines, as the model should emit them.
    pub target: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EntityExport {
    pub records: Vec<EntityRecord>,
    pub sub_questions: usize,
    /// Sub-questions whose proposals include the true subject.
    pub covered: usize,
}

/// One record per proposed candidate of every post-edit sub-question.
pub fn entity_records(
    case: &MQuakeCase,
    graph: &KnowledgeGraph,
    detectors: &Detectors,
) -> EntityExport {
    let mut out = EntityExport::default();
    for (i, hop) in case.new_hops.iter().enumerate() {
        let names: HashSet<String> = case
            .hop_subject(i)
            .map(|(s, aliases)| {
                std::iter::once(s)
                    .chain(aliases)
                    .map(|n| normalize_alias(&n))
                    .collect()
            })
            .unwrap_or_default();
        let proposals = detectors.propose_entities(&hop.question, graph);
        let mut hit = false;
        for candidate in proposals {
            let is_subject = names.contains(&normalize_alias(&candidate));
            hit |= is_subject;
            out.records.push(EntityRecord {
                question: hop.question.clone(),
                candidate,
                label: u8::from(is_subject),
            });
        }
        out.sub_questions += 1;
        out.covered += usize::from(hit);
    }
    out
}

/// For each sub-question whose subject has facts in `graph`, one record per
/// relation of that subject, labelled 1 when its object is the hop answer.
pub fn relation_records(case: &MQuakeCase, graph: &KnowledgeGraph) -> Vec<RelationRecord> {
    let mut out = Vec::new();
    for (i, hop) in case.new_hops.iter().enumerate() {
        let Some((subject, aliases)) = case.hop_subject(i) else {
            continue;
        };
        let Some(id) = std::iter::once(&subject)
            .chain(&aliases)
            .find_map(|n| graph.resolve(n))
            .filter(|id| graph.contains_subject(id))
        else {
            continue;
        };
        for relation in graph.relations_of(id) {
            let object = graph.object_of(id, &relation).expect("relation of subject");
            let label = graph.label(object).unwrap_or(object.as_str());
            out.push(RelationRecord {
                question: hop.question.clone(),
                label: u8::from(match_answer(label, &hop.answer, &hop.aliases)),
                relation,
            });
        }
    }
    out
}

/// One record per multi-hop phrasing, paired with the dataset plan.
pub fn decomposition_records(
    case: &MQuakeCase,
) -> Result<Vec<DecompositionRecord>, DecomposeError> {
    case.multi_hop_questions
        .iter()
        .map(|q| {
            let plan = case.scripted_plan(q)?;
            Ok(DecompositionRecord {
                question: q.clone(),
                target: plan.sub_questions().join("\n"),
                sub_questions: plan.sub_questions().to_vec(),
            })
        })
        .collect()
}

/// Entity records with proposals made against each batch's graph.
pub fn export_entity_detector_dataset(
    cases: &[MQuakeCase],
    graphs: &GraphBuilder<'_>,
    detectors: &Detectors,
    batch: EditBatchSpec,
) -> EntityExport {
    let mut out = EntityExport::default();
    for group in partition_batches(cases, batch) {
        let (graph, _) = graphs.build(group);
        for case in group {
            let part = entity_records(case, &graph, detectors);
            out.records.extend(part.records);
            out.sub_questions += part.sub_questions;
            out.covered += part.covered;
        }
    }
    out
}

/// Relation records against each batch's graph. With `k = 1` every case
/// sees exactly its own edits.
pub fn export_relation_detector_dataset(
    cases: &[MQuakeCase],
    graphs: &GraphBuilder<'_>,
    batch: EditBatchSpec,
) -> Vec<RelationRecord> {
    partition_batches(cases, batch)
        .into_iter()
        .flat_map(|group| {
            let (graph, _) = graphs.build(group);
            group
                .iter()
                .flat_map(|c| relation_records(c, &graph))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Decomposition records for every case; cases whose plan cannot be built
/// are reported by error and skipped.
pub fn export_decomposition_dataset(
    cases: &[MQuakeCase],
) -> (Vec<DecompositionRecord>, Vec<DecomposeError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for case in cases {
        match decomposition_records(case) {
            Ok(r) => records.extend(r),
            Err(e) => errors.push(e),
        }
    }
    (records, errors)
}

fn edit_slots(cases: &[MQuakeCase]) -> HashSet<(String, String)> {
    cases
        .iter()
        .flat_map(|c| &c.rewrites)
        .map(|r| (normalize_alias(&r.subject), normalize_relation(&r.relation)))
        .collect()
}

/// Drop training cases that edit an `(s, r)` pair also edited in any of
/// the held-out sets. Returns the kept cases and the number dropped.
pub fn filter_overlapping(
    train: Vec<MQuakeCase>,
    held_out: &[&[MQuakeCase]],
) -> (Vec<MQuakeCase>, usize) {
    let taken: HashSet<(String, String)> =
        held_out.iter().flat_map(|set| edit_slots(set)).collect();
    let before = train.len();
    let kept: Vec<MQuakeCase> = train
        .into_iter()
        .filter(|c| edit_slots(std::slice::from_ref(c)).is_disjoint(&taken))
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}
