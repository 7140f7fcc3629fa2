//! Benchmark harness: dataset loading, edit batching, graph construction,
//! multi-hop evaluation and detector training-set export.

mod dataset;
mod export;
mod metrics;
mod noisy;

use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backends::GenerationBackend;
use crate::decomposer::DecomposeError;
use crate::detectors::Detectors;
use crate::extraction::{
    ingest_edits, EditStatement, IngestReport, Linker, StructuredExtractor, TripleExtractor,
};
use crate::kg::{ConflictMode, KnowledgeGraph};
use crate::normalize::normalize_answer;
use crate::orchestrator::HopError;
use crate::orchestrator::{answer_multihop, MultiHopFailure, PipelineConfig, PlanSource};

pub use dataset::{
    build_oracle, load_dataset, parse_dataset, DatasetError, DatasetSummary, GoldStep, GoldenPath,
    Hop, LabeledTriple, MQuakeCase, OracleKind, Rewrite,
};
pub use export::{
    decomposition_records, entity_records, export_decomposition_dataset,
    export_entity_detector_dataset, export_relation_detector_dataset, filter_overlapping,
    relation_records, DecompositionRecord, EntityExport, EntityRecord, RelationRecord,
};
pub use metrics::{
    match_answer, Breakdown, CaseFailure, CaseOutcome, MetricLawViolation, MetricsReport,
    PhrasingOutcome, RunMetadata,
};
pub use noisy::NoisyOracleScorer;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    MetricLaw(#[from] MetricLawViolation),
    #[error("evaluation setup: {0}")]
    Setup(String),
}

/// Number of consecutive cases whose edits share one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EditBatchSpec {
    Size(NonZeroUsize),
    #[default]
    All,
}

impl EditBatchSpec {
    pub fn size(k: usize) -> Option<Self> {
        NonZeroUsize::new(k).map(Self::Size)
    }
}

impl FromStr for EditBatchSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::All);
        }
        s.parse::<usize>()
            .ok()
            .and_then(Self::size)
            .ok_or_else(|| format!("batch size must be a positive integer or \"all\", got {s:?}"))
    }
}

impl TryFrom<String> for EditBatchSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<EditBatchSpec> for String {
    fn from(spec: EditBatchSpec) -> String {
        spec.to_string()
    }
}

impl fmt::Display for EditBatchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Size(k) => write!(f, "{k}"),
            Self::All => f.write_str("all"),
        }
    }
}

/// Contiguous groups of `k` cases in dataset order.
pub fn partition_batches(cases: &[MQuakeCase], spec: EditBatchSpec) -> Vec<&[MQuakeCase]> {
    if cases.is_empty() {
        return Vec::new();
    }
    match spec {
        EditBatchSpec::All => vec![cases],
        EditBatchSpec::Size(k) => cases.chunks(k.get()).collect(),
    }
}

/// Edit statements of a batch, in case order.
pub fn batch_edits(cases: &[MQuakeCase], source: EditSource) -> Vec<EditStatement> {
    cases
        .iter()
        .flat_map(|c| &c.rewrites)
        .map(|r| match source {
            EditSource::Structured => r.statement(),
            EditSource::Text => r.text_statement(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditSource {
    /// Use the rewrite fields directly.
    #[default]
    Structured,
    /// Render each rewrite as a sentence and run the extractor on it.
    Text,
}

/// When edits reach the graph relative to the questions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// All edits of a batch first, then every question of the batch.
    #[default]
    Pooled,
    /// Within a batch, each case's edits arrive right before its questions.
    Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanMode {
    Model,
    #[default]
    Scripted,
}

impl fmt::Display for PlanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanMode::Model => "model",
            PlanMode::Scripted => "scripted",
        })
    }
}

/// Builds knowledge graphs from case rewrites.
#[derive(Clone, Copy)]
pub struct GraphBuilder<'a> {
    pub extractor: &'a dyn TripleExtractor,
    pub linker: Linker<'a>,
    pub mode: ConflictMode,
    pub source: EditSource,
}

impl fmt::Debug for GraphBuilder<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GraphBuilder")
            .field("mode", &self.mode)
            .field("source", &self.source)
            .finish()
    }
}

impl Default for GraphBuilder<'static> {
    fn default() -> Self {
        Self::structured(ConflictMode::Replace)
    }
}

#[derive(Debug, Default)]
pub struct BuildStats {
    pub ingest: IngestReport,
    pub skipped_aliases: usize,
}

impl BuildStats {
    fn merge(&mut self, other: BuildStats) {
        self.ingest.merge(other.ingest);
        self.skipped_aliases += other.skipped_aliases;
    }
}

impl GraphBuilder<'static> {
    pub fn structured(mode: ConflictMode) -> Self {
        Self {
            extractor: &StructuredExtractor,
            linker: Linker::local(),
            mode,
            source: EditSource::Structured,
        }
    }
}

impl GraphBuilder<'_> {
    pub fn build(&self, cases: &[MQuakeCase]) -> (KnowledgeGraph, BuildStats) {
        let mut graph = KnowledgeGraph::with_mode(self.mode);
        let stats = self.extend(&mut graph, cases);
        (graph, stats)
    }

    /// Ingest the cases' rewrites, then attach dataset aliases to every
    /// entity that a hop answer names. Aliases already owned by another
    /// entity are skipped and counted.
    pub fn extend(&self, graph: &mut KnowledgeGraph, cases: &[MQuakeCase]) -> BuildStats {
        let ingest = ingest_edits(
            graph,
            &batch_edits(cases, self.source),
            self.extractor,
            &self.linker,
        );
        let mut skipped = 0;
        for hop in cases
            .iter()
            .flat_map(|c| c.new_hops.iter().chain(&c.original_hops))
        {
            let Some(id) = graph.resolve(&hop.answer).cloned() else {
                continue;
            };
            for alias in &hop.aliases {
                match graph.resolve(alias) {
                    Some(owner) if *owner == id => {}
                    Some(_) => skipped += 1,
                    None => {
                        if graph.add_alias(&id, alias).is_err() {
                            skipped += 1;
                        }
                    }
                }
            }
        }
        BuildStats {
            ingest,
            skipped_aliases: skipped,
        }
    }
}

/// Everything a run needs besides the cases.
#[derive(Debug)]
pub struct EvalSettings {
    pub dataset_name: String,
    pub batch: EditBatchSpec,
    pub schedule: Schedule,
    pub plan_mode: PlanMode,
    pub oracle: Option<OracleKind>,
    pub relation_scorer: String,
    /// Upper bound on concurrently evaluated cases; 0 uses all cores.
    pub parallelism: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            dataset_name: String::new(),
            batch: EditBatchSpec::All,
            schedule: Schedule::Pooled,
            plan_mode: PlanMode::Scripted,
            oracle: Some(OracleKind::World),
            relation_scorer: "lexical".into(),
            parallelism: 0,
        }
    }
}

pub struct EvalContext<'a> {
    pub backend: &'a dyn GenerationBackend,
    pub detectors: &'a Detectors,
    pub pipeline: &'a PipelineConfig,
    pub graphs: GraphBuilder<'a>,
}

fn failure_kind(failure: &MultiHopFailure) -> &'static str {
    match failure {
        MultiHopFailure::Decomposition(DecomposeError::Backend(_)) => "backend",
        MultiHopFailure::Decomposition(DecomposeError::Data(_)) => "data",
        MultiHopFailure::Decomposition(_) => "decomposition",
        MultiHopFailure::Substitution { .. } => "substitution",
        MultiHopFailure::Hop {
            source: HopError::Backend(_),
            ..
        } => "backend",
        MultiHopFailure::Hop {
            source: HopError::Detector(_),
            ..
        } => "detector",
        MultiHopFailure::Hop { .. } => "hop",
    }
}

/// Run the phrasings of one case until one produces the new answer.
pub fn evaluate_case(
    case: &MQuakeCase,
    graph: &KnowledgeGraph,
    ctx: &EvalContext<'_>,
    plan_mode: PlanMode,
) -> (CaseOutcome, Vec<CaseFailure>) {
    let gold = case.golden_path();
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (index, phrasing) in case.multi_hop_questions.iter().enumerate() {
        let fail = |kind: &str, message: String| CaseFailure {
            case_id: case.case_id.clone(),
            phrasing: index,
            kind: kind.to_string(),
            message,
        };
        let source = match plan_mode {
            PlanMode::Model => PlanSource::Model,
            PlanMode::Scripted => match case.scripted_plan(phrasing) {
                Ok(plan) => PlanSource::Scripted(plan),
                Err(e) => {
                    failures.push(fail("data", e.to_string()));
                    outcomes.push(PhrasingOutcome {
                        failed: true,
                        ..PhrasingOutcome::default()
                    });
                    continue;
                }
            },
        };
        let outcome = match answer_multihop(
            phrasing,
            graph,
            ctx.detectors,
            ctx.backend,
            ctx.pipeline,
            &source,
        ) {
            Ok(record) => {
                let aligned = record.hops.len() == gold.steps.len();
                let hops = record.hops.iter().zip(&gold.steps);
                PhrasingOutcome {
                    final_correct: match_answer(
                        &record.final_answer,
                        &case.new_answer,
                        &case.new_answer_aliases,
                    ),
                    hops_correct: aligned
                        && hops
                            .clone()
                            .all(|(h, g)| match_answer(&h.answer, &g.answer, &g.aliases)),
                    hops_exact: aligned
                        && hops.into_iter().all(|(h, g)| {
                            normalize_answer(&h.answer) == normalize_answer(&g.answer)
                        }),
                    failed: false,
                }
            }
            Err(e) => {
                failures.push(fail(failure_kind(&e.failure), e.to_string()));
                PhrasingOutcome {
                    failed: true,
                    ..PhrasingOutcome::default()
                }
            }
        };
        outcomes.push(outcome);
        if outcome.final_correct {
            break;
        }
    }
    let outcome = CaseOutcome::from_phrasings(
        case.case_id.clone(),
        case.hop_count(),
        case.edit_count(),
        &outcomes,
    );
    (outcome, failures)
}

pub const MULTI_PHRASING_RULE: &str =
    "a case counts for M-Acc if any phrasing yields the new answer; H-Acc is judged on the first such phrasing";
pub const ANSWER_MATCHING_RULE: &str =
    "normalized answer equal to the gold answer or one of its aliases; h_acc_exact ignores aliases";

pub fn evaluate(
    cases: &[MQuakeCase],
    settings: &EvalSettings,
    ctx: &EvalContext<'_>,
) -> Result<MetricsReport, EvalError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.parallelism)
        .build()
        .map_err(|e| EvalError::Setup(e.to_string()))?;
    let batches = partition_batches(cases, settings.batch);
    let mut outcomes = Vec::with_capacity(cases.len());
    let mut failures = Vec::new();
    let mut stats = BuildStats::default();
    let mut facts_per_batch = Vec::with_capacity(batches.len());

    for batch in &batches {
        match settings.schedule {
            Schedule::Pooled => {
                let (graph, built) = ctx.graphs.build(batch);
                stats.merge(built);
                facts_per_batch.push(graph.len());
                let results: Vec<_> = pool.install(|| {
                    batch
                        .par_iter()
                        .map(|case| evaluate_case(case, &graph, ctx, settings.plan_mode))
                        .collect()
                });
                for (outcome, f) in results {
                    outcomes.push(outcome);
                    failures.extend(f);
                }
            }
            Schedule::Sequential => {
                let mut graph = KnowledgeGraph::with_mode(ctx.graphs.mode);
                for case in batch.iter() {
                    stats.merge(ctx.graphs.extend(&mut graph, std::slice::from_ref(case)));
                    let (outcome, f) = evaluate_case(case, &graph, ctx, settings.plan_mode);
                    outcomes.push(outcome);
                    failures.extend(f);
                }
                facts_per_batch.push(graph.len());
            }
        }
    }

    let metadata = RunMetadata {
        dataset: settings.dataset_name.clone(),
        alpha: ctx.detectors.alpha(),
        k: settings.batch.to_string(),
        conflict_mode: ctx.graphs.mode.to_string(),
        schedule: match settings.schedule {
            Schedule::Pooled => "pooled".into(),
            Schedule::Sequential => "sequential".into(),
        },
        plan_source: settings.plan_mode.to_string(),
        retrieval_mode: match ctx.pipeline.retrieval_mode {
            crate::backends::RetrievalAnswerMode::Deterministic => "deterministic".into(),
            crate::backends::RetrievalAnswerMode::Llm => "llm".into(),
        },
        oracle: settings.oracle.map(|o| match o {
            OracleKind::World => "world".into(),
            OracleKind::Gold => "gold".into(),
        }),
        relation_scorer: settings.relation_scorer.clone(),
        multi_phrasing_rule: MULTI_PHRASING_RULE.into(),
        answer_matching: ANSWER_MATCHING_RULE.into(),
        n_batches: batches.len(),
        facts_per_batch,
        skipped_aliases: stats.skipped_aliases,
        ingest_failures: stats.ingest.failures.len(),
        integrity_warnings: cases
            .iter()
            .flat_map(|c| c.golden_path().warnings)
            .collect(),
    };
    Ok(MetricsReport::from_cases(outcomes, failures, metadata)?)
}
