use std::path::PathBuf;

use kgedit::detectors::{DetectorConfig, Detectors};
use kgedit::eval::{
    export_decomposition_dataset, export_entity_detector_dataset, export_relation_detector_dataset,
    filter_overlapping, load_dataset, relation_records, EditBatchSpec, GraphBuilder, MQuakeCase,
};

fn fixture() -> Vec<MQuakeCase> {
    load_dataset(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/mquake_fixture.json"))
        .unwrap()
}

#[test]
fn entity_records_sum_proposals_per_sub_question() {
    let cases = fixture();
    let detectors = Detectors::baseline(DetectorConfig::default()).unwrap();
    let builder = GraphBuilder::default();
    let one = EditBatchSpec::size(1).unwrap();
    let export = export_entity_detector_dataset(&cases, &builder, &detectors, one);

    let mut expected = 0;
    for case in &cases {
        let (graph, _) = builder.build(std::slice::from_ref(case));
        for hop in &case.new_hops {
            expected += detectors.propose_entities(&hop.question, &graph).len();
        }
    }
    assert_eq!(export.records.len(), expected);
    assert_eq!(
        export.sub_questions,
        cases.iter().map(MQuakeCase::hop_count).sum::<usize>()
    );
    assert!(export.records.iter().all(|r| r.label <= 1));
    assert_eq!(export.covered, export.sub_questions);
}

#[test]
fn decomposition_records_carry_one_marker_per_later_hop() {
    let cases = fixture();
    let (records, errors) = export_decomposition_dataset(&cases);
    assert!(errors.is_empty());
    let phrasings: usize = cases.iter().map(|c| c.multi_hop_questions.len()).sum();
    assert_eq!(records.len(), phrasings);
    for r in &records {
        let case = cases
            .iter()
            .find(|c| c.multi_hop_questions.contains(&r.question))
            .unwrap();
        assert_eq!(r.target.matches("[ENT]").count(), case.hop_count() - 1);
        assert!(!r.target.lines().next().unwrap().contains("[ENT]"));
        assert_eq!(r.target.lines().count(), case.hop_count());
    }
}

#[test]
fn relation_records_have_one_positive_per_edited_hop() {
    let cases = fixture();
    let builder = GraphBuilder::default();
    for case in &cases {
        let (graph, _) = builder.build(std::slice::from_ref(case));
        let records = relation_records(case, &graph);
        for (i, hop) in case.new_hops.iter().enumerate() {
            let positives = records
                .iter()
                .filter(|r| r.question == hop.question && r.label == 1)
                .count();
            let subject_in_graph = case
                .hop_subject(i)
                .and_then(|(s, _)| graph.resolve(&s).cloned())
                .is_some_and(|id| graph.contains_subject(&id));
            if case.is_edited_hop(i) {
                assert!(subject_in_graph, "case {} hop {i}", case.case_id);
                assert_eq!(positives, 1, "case {} hop {i}", case.case_id);
            }
        }
    }
    let all = export_relation_detector_dataset(&cases, &builder, EditBatchSpec::size(1).unwrap());
    let per_case: usize = cases
        .iter()
        .map(|c| relation_records(c, &builder.build(std::slice::from_ref(c)).0).len())
        .sum();
    assert_eq!(all.len(), per_case);
}

#[test]
fn overlap_filter_drops_shared_edit_slots() {
    let cases = fixture();
    let held: Vec<MQuakeCase> = cases.iter().filter(|c| c.case_id == "2").cloned().collect();
    let (kept, dropped) = filter_overlapping(cases.clone(), &[&held]);
    // Case 2 itself and case 1, which edits the same (Brazil, continent) slot.
    assert_eq!(dropped, 2);
    assert!(kept.iter().all(|c| c.case_id != "1" && c.case_id != "2"));
    let (all, none) = filter_overlapping(cases.clone(), &[]);
    assert_eq!((all.len(), none), (cases.len(), 0));
}
