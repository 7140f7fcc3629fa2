//! Graph-augmented multi-hop answering. Each sub-question is either answered
//! from a stored fact (when a subject is found in the graph and one of its
//! relations scores above `alpha`) or handed to the generation backend.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::backends::{
    answer_with_fact, clean_generation, BackendError, GenerationBackend, RetrievalAnswerMode,
};
use crate::decomposer::{
    decompose, instantiate, DecomposeError, DecompositionPlan, TemplateSet, MARKER,
};
use crate::detectors::{DetectorError, Detectors};
use crate::kg::KnowledgeGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Retrieved,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub sub_question: String,
    pub route: Route,
    pub selected_subject: Option<String>,
    pub selected_relation: Option<String>,
    /// Score of the best relation of the selected subject, even when it did
    /// not clear the threshold.
    pub relation_score: Option<f64>,
    pub retrieved_object: Option<String>,
    pub answer: String,
}

impl HopTrace {
    /// Retrieved hops carry an object and a score above `alpha`; generated
    /// hops carry no object.
    pub fn route_is_sound(&self, alpha: f64) -> bool {
        match self.route {
            Route::Retrieved => {
                self.retrieved_object.is_some()
                    && self.selected_relation.is_some()
                    && self.relation_score.is_some_and(|p| p > alpha)
            }
            Route::Generated => self.retrieved_object.is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question: String,
    pub plan: DecompositionPlan,
    pub hops: Vec<HopTrace>,
    pub final_answer: String,
}

impl AnswerRecord {
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, self)?;
        out.write_all(b"\n")
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub retrieval_mode: RetrievalAnswerMode,
    pub templates: TemplateSet,
}

#[derive(Debug, thiserror::Error)]
pub enum HopError {
    #[error("unresolved {MARKER} in sub-question {0:?}")]
    UnresolvedMarker(String),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialTrace {
    pub question: String,
    pub plan: Option<DecompositionPlan>,
    pub hops: Vec<HopTrace>,
}

#[derive(Debug, thiserror::Error)]
pub enum MultiHopFailure {
    #[error("decomposition failed: {0}")]
    Decomposition(#[source] DecomposeError),
    #[error("hop {hop}: {source}")]
    Substitution {
        hop: usize,
        #[source]
        source: DecomposeError,
    },
    #[error("hop {hop} ({sub_question:?}): {source}")]
    Hop {
        hop: usize,
        sub_question: String,
        #[source]
        source: HopError,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{failure}")]
pub struct MultiHopError {
    pub failure: MultiHopFailure,
    pub partial: Box<PartialTrace>,
}

impl MultiHopError {
    pub fn is_backend(&self) -> bool {
        matches!(
            &self.failure,
            MultiHopFailure::Decomposition(DecomposeError::Backend(_))
                | MultiHopFailure::Hop {
                    source: HopError::Backend(_),
                    ..
                }
        )
    }
}

/// Where the plan comes from.
#[derive(Debug, Clone)]
pub enum PlanSource {
    /// Ask the backend with the divide prompt.
    Model,
    /// Use a plan built ahead of time, e.g. from dataset sub-questions.
    Scripted(DecompositionPlan),
}

fn generate_answer(
    question: &str,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<String, BackendError> {
    let raw = backend.generate(&config.templates.answer.render(question))?;
    let answer = clean_generation(&raw);
    if answer.is_empty() {
        return Err(BackendError::EmptyResponse);
    }
    Ok(answer)
}

pub fn answer_subquestion(
    question: &str,
    graph: &KnowledgeGraph,
    detectors: &Detectors,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
) -> Result<HopTrace, HopError> {
    if question.contains(MARKER) {
        return Err(HopError::UnresolvedMarker(question.to_string()));
    }
    let mut trace = HopTrace {
        sub_question: question.to_string(),
        route: Route::Generated,
        selected_subject: None,
        selected_relation: None,
        relation_score: None,
        retrieved_object: None,
        answer: String::new(),
    };
    let candidates = detectors.propose_entities(question, graph);
    let subject = detectors.select_subject(question, &candidates)?;
    let known = subject.as_ref().and_then(|s| {
        graph
            .resolve(&s.candidate)
            .filter(|id| graph.contains_subject(id))
    });
    trace.selected_subject = subject.map(|s| s.candidate);

    if let Some(id) = known {
        let relations = graph.relations_of(id);
        let best = detectors.best_relation(question, relations.iter().map(String::as_str))?;
        trace.relation_score = best.as_ref().map(|b| b.score);
        let passed =
            best.filter(|b| crate::detectors::exceeds_threshold(b.score, detectors.alpha()));
        if let Some(relation) = passed {
            let object = graph
                .object_of(id, &relation.candidate)
                .expect("relation comes from the subject's own facts");
            let label = graph.label(object).unwrap_or(object.as_str()).to_string();
            trace.answer = answer_with_fact(
                backend,
                question,
                &label,
                config.retrieval_mode,
                &config.templates.retrieve,
            )?;
            trace.route = Route::Retrieved;
            trace.selected_relation = Some(relation.candidate);
            trace.retrieved_object = Some(label);
            debug_assert!(trace.route_is_sound(detectors.alpha()));
            return Ok(trace);
        }
    }
    trace.answer = generate_answer(question, backend, config)?;
    debug_assert!(trace.route_is_sound(detectors.alpha()));
    Ok(trace)
}

pub fn answer_multihop(
    question: &str,
    graph: &KnowledgeGraph,
    detectors: &Detectors,
    backend: &dyn GenerationBackend,
    config: &PipelineConfig,
    plan_source: &PlanSource,
) -> Result<AnswerRecord, MultiHopError> {
    let mut partial = PartialTrace {
        question: question.to_string(),
        ..PartialTrace::default()
    };
    let plan = match plan_source {
        PlanSource::Model => decompose(question, backend, &config.templates.divide),
        PlanSource::Scripted(plan) => Ok(plan.clone()),
    }
    .map_err(|e| MultiHopError {
        failure: MultiHopFailure::Decomposition(e),
        partial: Box::new(partial.clone()),
    })?;
    partial.plan = Some(plan.clone());

    let mut previous: Option<String> = None;
    for (i, template) in plan.sub_questions().iter().enumerate() {
        let hop = i + 1;
        let sub_question = match &previous {
            Some(answer) => instantiate(template, answer).map_err(|source| MultiHopError {
                failure: MultiHopFailure::Substitution { hop, source },
                partial: Box::new(partial.clone()),
            })?,
            None => template.clone(),
        };
        let trace = answer_subquestion(&sub_question, graph, detectors, backend, config).map_err(
            |source| MultiHopError {
                failure: MultiHopFailure::Hop {
                    hop,
                    sub_question: sub_question.clone(),
                    source,
                },
                partial: Box::new(partial.clone()),
            },
        )?;
        previous = Some(trace.answer.clone());
        partial.hops.push(trace);
    }
    let final_answer = previous.expect("plans have at least one sub-question");
    Ok(AnswerRecord {
        question: question.to_string(),
        plan,
        hops: partial.hops,
        final_answer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{OracleBackend, OracleFactTable, ScriptedBackend};
    use crate::detectors::DetectorConfig;
    use crate::kg::NewFact;

    const WATFORD_Q: &str =
        "What is the continent of origin for the sport associated with Watford F.C.?";

    fn watford_graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        let af = g
            .register_entity(
                "Association Football",
                &["soccer", "Association Football (Soccer)"],
                None,
            )
            .unwrap();
        let br = g.register_entity("Brazil", &[] as &[&str], None).unwrap();
        let afr = g.register_entity("Africa", &[] as &[&str], None).unwrap();
        for (s, r, o) in [
            (&af, "country of origin", &br),
            (&br, "sport", &af),
            (&br, "continent", &afr),
        ] {
            g.add_fact(NewFact::new(s.clone(), r, o.clone(), ""))
                .unwrap();
        }
        g
    }

    fn oracle() -> OracleBackend {
        OracleBackend::new(
            [
                ("Which sport is Watford F.C. associated with?", "Association Football (Soccer)"),
                ("Which country was Association Football (Soccer) created in?", "England"),
                ("Which continent is England located in?", "Europe"),
                ("Which continent is Brazil located in?", "South America"),
                (WATFORD_Q, "1. Which sport is Watford F.C. associated with? 2. Which country was [ENT] created in? 3. Which continent is [ENT] located in?"),
            ]
            .into_iter()
            .collect::<OracleFactTable>(),
        )
    }

    fn detectors() -> Detectors {
        Detectors::baseline(DetectorConfig::default()).unwrap()
    }

    #[test]
    fn watford_end_to_end() {
        let rec = answer_multihop(
            WATFORD_Q,
            &watford_graph(),
            &detectors(),
            &oracle(),
            &PipelineConfig::default(),
            &PlanSource::Model,
        )
        .unwrap();
        let routes: Vec<Route> = rec.hops.iter().map(|h| h.route).collect();
        assert_eq!(
            routes,
            [Route::Generated, Route::Retrieved, Route::Retrieved]
        );
        assert_eq!(rec.hops[0].retrieved_object, None);
        assert_eq!(
            rec.hops[1].sub_question,
            "Which country was Association Football (Soccer) created in?"
        );
        assert_eq!(rec.hops[1].retrieved_object.as_deref(), Some("Brazil"));
        assert_eq!(
            rec.hops[2].sub_question,
            "Which continent is Brazil located in?"
        );
        assert_eq!(rec.final_answer, "Africa");
        assert!(rec.hops.iter().all(|h| h.route_is_sound(0.5)));
    }

    #[test]
    fn empty_graph_follows_unedited_chain() {
        let rec = answer_multihop(
            WATFORD_Q,
            &KnowledgeGraph::new(),
            &detectors(),
            &oracle(),
            &PipelineConfig::default(),
            &PlanSource::Model,
        )
        .unwrap();
        assert!(rec.hops.iter().all(|h| h.route == Route::Generated));
        assert_eq!(rec.final_answer, "Europe");
    }

    #[test]
    fn low_relation_score_falls_back_to_generation() {
        let b = ScriptedBackend::new(["Answer: Brasília."]);
        let hop = answer_subquestion(
            "What is the capital of Brazil?",
            &watford_graph(),
            &detectors(),
            &b,
            &PipelineConfig::default(),
        )
        .unwrap();
        assert_eq!(hop.route, Route::Generated);
        assert_eq!(hop.selected_subject.as_deref(), Some("Brazil"));
        assert!(hop.relation_score.unwrap() <= 0.5);
        assert_eq!(hop.answer, "Brasília");
    }

    #[test]
    fn backend_failure_keeps_partial_trace() {
        let b = ScriptedBackend::new(["Association Football (Soccer)"]);
        let plan = DecompositionPlan::new(
            WATFORD_Q,
            vec![
                "Which sport is Watford F.C. associated with?".into(),
                "Who founded [ENT]?".into(),
            ],
        )
        .unwrap();
        let err = answer_multihop(
            WATFORD_Q,
            &watford_graph(),
            &detectors(),
            &b,
            &PipelineConfig::default(),
            &PlanSource::Scripted(plan),
        )
        .unwrap_err();
        assert!(err.is_backend());
        assert_eq!(err.partial.hops.len(), 1);
        assert!(matches!(err.failure, MultiHopFailure::Hop { hop: 2, .. }));
    }

    #[test]
    fn single_hop_plan() {
        let plan =
            DecompositionPlan::new("Q", vec!["Which continent is Brazil located in?".into()])
                .unwrap();
        let rec = answer_multihop(
            "Q",
            &watford_graph(),
            &detectors(),
            &oracle(),
            &PipelineConfig::default(),
            &PlanSource::Scripted(plan),
        )
        .unwrap();
        assert_eq!(rec.hops.len(), 1);
        assert_eq!(rec.final_answer, "Africa");
    }

    #[test]
    fn trace_jsonl_has_stable_fields() {
        let rec = answer_multihop(
            WATFORD_Q,
            &watford_graph(),
            &detectors(),
            &oracle(),
            &PipelineConfig::default(),
            &PlanSource::Model,
        )
        .unwrap();
        let mut buf = Vec::new();
        rec.write_jsonl(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["final_answer"], "Africa");
        assert_eq!(v["hops"][1]["route"], "retrieved");
        assert_eq!(v["plan"]["n"], 3);
    }
}
