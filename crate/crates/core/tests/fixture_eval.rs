use std::path::PathBuf;

use kgedit::backends::{OracleBackend, ScriptedBackend};
use kgedit::detectors::{DetectorConfig, Detectors};
use kgedit::eval::{
    build_oracle, evaluate, load_dataset, DatasetSummary, EditBatchSpec, EvalContext, EvalSettings,
    GraphBuilder, MQuakeCase, NoisyOracleScorer, OracleKind, PlanMode, Schedule,
};
use kgedit::kg::ConflictMode;
use kgedit::orchestrator::PipelineConfig;

fn fixture() -> Vec<MQuakeCase> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mquake_fixture.json");
    load_dataset(&path).unwrap()
}

fn run(
    cases: &[MQuakeCase],
    oracle: OracleKind,
    batch: EditBatchSpec,
    schedule: Schedule,
    mode: ConflictMode,
) -> kgedit::eval::MetricsReport {
    let backend = OracleBackend::new(build_oracle(cases, oracle));
    let detectors = Detectors::baseline(DetectorConfig::default()).unwrap();
    let pipeline = PipelineConfig::default();
    let ctx = EvalContext {
        backend: &backend,
        detectors: &detectors,
        pipeline: &pipeline,
        graphs: GraphBuilder::structured(mode),
    };
    let settings = EvalSettings {
        dataset_name: "fixture".into(),
        batch,
        schedule,
        oracle: Some(oracle),
        ..EvalSettings::default()
    };
    evaluate(cases, &settings, &ctx).unwrap()
}

#[test]
fn fixture_loads_and_is_consistent() {
    let cases = fixture();
    let summary = DatasetSummary::of(&cases);
    assert!(summary.total >= 12);
    assert_eq!(
        summary.by_hops.keys().copied().collect::<Vec<_>>(),
        [2, 3, 4]
    );
    assert_eq!(
        summary.by_edits.keys().copied().collect::<Vec<_>>(),
        [1, 2, 3, 4]
    );
    for case in &cases {
        assert!(case.golden_path().warnings.is_empty(), "{}", case.case_id);
        for q in &case.multi_hop_questions {
            assert_eq!(case.scripted_plan(q).unwrap().n(), case.hop_count());
        }
    }
}

#[test]
fn gold_oracle_needs_no_graph() {
    let cases = fixture();
    let report = run(
        &cases,
        OracleKind::Gold,
        EditBatchSpec::size(1).unwrap(),
        Schedule::Pooled,
        ConflictMode::Replace,
    );
    assert_eq!(
        (report.m_acc, report.h_acc),
        (1.0, 1.0),
        "{}",
        report.to_json()
    );
}

#[test]
fn world_oracle_single_edit_batches_are_perfect() {
    let cases = fixture();
    let report = run(
        &cases,
        OracleKind::World,
        EditBatchSpec::size(1).unwrap(),
        Schedule::Pooled,
        ConflictMode::Replace,
    );
    assert_eq!(
        (report.m_acc, report.h_acc),
        (1.0, 1.0),
        "{}",
        report.to_json()
    );
    assert_eq!(report.metadata.n_batches, cases.len());
    let expected: Vec<usize> = cases.iter().map(|c| c.edit_count()).collect();
    assert_eq!(report.metadata.facts_per_batch, expected);
}

#[test]
fn world_oracle_sequential_all_is_perfect() {
    let cases = fixture();
    let report = run(
        &cases,
        OracleKind::World,
        EditBatchSpec::All,
        Schedule::Sequential,
        ConflictMode::Replace,
    );
    assert_eq!(
        (report.m_acc, report.h_acc),
        (1.0, 1.0),
        "{}",
        report.to_json()
    );
}

#[test]
fn pooled_all_loses_the_overwritten_case() {
    let cases = fixture();
    let report = run(
        &cases,
        OracleKind::World,
        EditBatchSpec::All,
        Schedule::Pooled,
        ConflictMode::Replace,
    );
    let wrong: Vec<&str> = report
        .cases
        .iter()
        .filter(|c| !c.multi_hop_correct)
        .map(|c| c.case_id.as_str())
        .collect();
    assert_eq!(wrong, ["1"], "{}", report.to_json());
}

#[test]
fn empty_graph_run_matches_unedited_chain() {
    let cases = fixture();
    // No edits reach the graph: every hop is generated from the world oracle.
    let stripped: Vec<MQuakeCase> = cases
        .iter()
        .map(|c| {
            let mut c = c.clone();
            c.new_hops = c.original_hops.clone();
            c.new_answer = c.original_answer.clone().unwrap();
            c.new_answer_aliases = c.original_answer_aliases.clone();
            c
        })
        .collect();
    let backend = OracleBackend::new(build_oracle(&cases, OracleKind::World));
    let detectors = Detectors::baseline(DetectorConfig::default()).unwrap();
    let graph = kgedit::kg::KnowledgeGraph::new();
    let pipeline = PipelineConfig::default();
    for case in &stripped {
        let plan = case.scripted_plan(&case.multi_hop_questions[0]).unwrap();
        let rec = kgedit::orchestrator::answer_multihop(
            &case.multi_hop_questions[0],
            &graph,
            &detectors,
            &backend,
            &pipeline,
            &kgedit::orchestrator::PlanSource::Scripted(plan),
        )
        .unwrap();
        assert!(rec
            .hops
            .iter()
            .all(|h| h.route == kgedit::orchestrator::Route::Generated));
        assert_eq!(
            &rec.final_answer,
            case.original_answer.as_ref().unwrap(),
            "{}",
            case.case_id
        );
    }
}

#[test]
fn model_plan_source_with_scripted_backend() {
    let cases = fixture();
    let case = cases.iter().find(|c| c.case_id == "2").unwrap().clone();
    let mut only = case.clone();
    only.multi_hop_questions.truncate(1);
    let backend = ScriptedBackend::new([
        "1. Which sport is Watford F.C. associated with? 2. Which country was [ENT] created in? 3. Which continent is [ENT] located in?",
        "association football",
    ]);
    let detectors = Detectors::baseline(DetectorConfig::default()).unwrap();
    let pipeline = PipelineConfig::default();
    let ctx = EvalContext {
        backend: &backend,
        detectors: &detectors,
        pipeline: &pipeline,
        graphs: GraphBuilder::default(),
    };
    let settings = EvalSettings {
        plan_mode: PlanMode::Model,
        oracle: None,
        ..EvalSettings::default()
    };
    let report = evaluate(std::slice::from_ref(&only), &settings, &ctx).unwrap();
    assert_eq!(
        (report.m_acc, report.h_acc),
        (1.0, 1.0),
        "{}",
        report.to_json()
    );
    assert_eq!(backend.remaining(), 0);
}

fn sweep_point(cases: &[MQuakeCase], alpha: f64) -> f64 {
    let backend = OracleBackend::new(build_oracle(cases, OracleKind::World));
    let detectors = Detectors::baseline(DetectorConfig::with_alpha(alpha).unwrap())
        .unwrap()
        .with_relation_scorer(Box::new(NoisyOracleScorer::from_cases(cases, 7)));
    let pipeline = PipelineConfig::default();
    let ctx = EvalContext {
        backend: &backend,
        detectors: &detectors,
        pipeline: &pipeline,
        graphs: GraphBuilder::structured(ConflictMode::Replace),
    };
    let settings = EvalSettings {
        batch: EditBatchSpec::All,
        schedule: Schedule::Sequential,
        oracle: Some(OracleKind::World),
        relation_scorer: "noisy-oracle:7".into(),
        ..EvalSettings::default()
    };
    evaluate(cases, &settings, &ctx).unwrap().m_acc
}

#[test]
fn alpha_sweep_peaks_in_the_middle() {
    let cases = fixture();
    let accs: Vec<f64> = [0.1, 0.25, 0.5, 0.75, 0.9]
        .iter()
        .map(|&a| sweep_point(&cases, a))
        .collect();
    assert!(accs[2] >= accs[0] && accs[2] >= accs[4], "{accs:?}");
    assert!(accs[2] > accs[4], "{accs:?}");
}

#[test]
fn append_only_lowers_accuracy_on_the_conflicting_pair() {
    let cases: Vec<MQuakeCase> = fixture()
        .into_iter()
        .filter(|c| c.case_id == "1" || c.case_id == "2")
        .collect();
    let cdm = run(
        &cases,
        OracleKind::World,
        EditBatchSpec::All,
        Schedule::Sequential,
        ConflictMode::Replace,
    );
    let append = run(
        &cases,
        OracleKind::World,
        EditBatchSpec::All,
        Schedule::Sequential,
        ConflictMode::AppendOnly,
    );
    assert_eq!((cdm.m_acc, cdm.h_acc), (1.0, 1.0));
    assert_eq!(append.h_acc, 0.5, "{}", append.to_json());
    let right: Vec<&str> = append
        .cases
        .iter()
        .filter(|c| c.multi_hop_correct)
        .map(|c| c.case_id.as_str())
        .collect();
    assert_eq!(right, ["1"]);
}
