use std::collections::{BTreeMap, HashMap};

use kgedit::kg::{AddOutcome, ConflictMode, EntityId, KnowledgeGraph, NewFact};
use proptest::prelude::*;

const ENTITIES: [&str; 4] = ["Brazil", "Africa", "Asia", "Europe"];
const RELATIONS: [&str; 3] = ["continent", "capital", "Sport"];

#[derive(Debug, Clone)]
enum Op {
    Add(usize, usize, usize),
    Remove(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..ENTITIES.len(), 0..RELATIONS.len(), 0..ENTITIES.len()).prop_map(|(s, r, o)| Op::Add(s, r, o)),
        1 => (0..ENTITIES.len(), 0..RELATIONS.len()).prop_map(|(s, r)| Op::Remove(s, r)),
    ]
}

fn setup(mode: ConflictMode) -> (KnowledgeGraph, Vec<EntityId>) {
    let mut g = KnowledgeGraph::with_mode(mode);
    let ids = ENTITIES
        .iter()
        .map(|e| g.register_entity::<&str>(e, &[], None).unwrap())
        .collect();
    (g, ids)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn replace_mode_is_last_writer_wins(ops in prop::collection::vec(op(), 0..40)) {
        let (mut g, ids) = setup(ConflictMode::Replace);
        let mut oracle: HashMap<(usize, String), usize> = HashMap::new();
        for op in &ops {
            match *op {
                Op::Add(s, r, o) => {
                    let outcome = g.add_fact(NewFact::new(ids[s].clone(), RELATIONS[r], ids[o].clone(), "")).unwrap();
                    let previous = oracle.insert((s, RELATIONS[r].to_lowercase()), o);
                    match (outcome, previous) {
                        (AddOutcome::Inserted, None) => {}
                        (AddOutcome::Replaced { old }, Some(p)) => prop_assert_eq!(&old.object, &ids[p]),
                        (got, want) => prop_assert!(false, "outcome {got:?} with oracle previous {want:?}"),
                    }
                }
                Op::Remove(s, r) => {
                    let removed = g.remove_fact(&ids[s], RELATIONS[r]);
                    match oracle.remove(&(s, RELATIONS[r].to_lowercase())) {
                        Some(o) => prop_assert_eq!(&removed.unwrap().object, &ids[o]),
                        None => prop_assert!(removed.is_err()),
                    }
                }
            }
            for (s, sid) in ids.iter().enumerate() {
                for r in RELATIONS {
                    let want = oracle.get(&(s, r.to_lowercase())).map(|&o| &ids[o]);
                    prop_assert_eq!(g.object_of(sid, r), want);
                }
            }
            prop_assert_eq!(g.len(), oracle.len());
        }
    }

    #[test]
    fn append_only_mode_reports_the_earliest_fact(ops in prop::collection::vec(op(), 0..40)) {
        let (mut g, ids) = setup(ConflictMode::AppendOnly);
        let mut oracle: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for op in &ops {
            match *op {
                Op::Add(s, r, o) => {
                    prop_assert_eq!(
                        g.add_fact(NewFact::new(ids[s].clone(), RELATIONS[r], ids[o].clone(), "")).unwrap(),
                        AddOutcome::Inserted
                    );
                    oracle.entry((s, r)).or_default().push(o);
                }
                Op::Remove(s, r) => {
                    prop_assert_eq!(g.remove_fact(&ids[s], RELATIONS[r]).is_ok(), oracle.remove(&(s, r)).is_some());
                }
            }
            for ((s, r), objects) in &oracle {
                prop_assert_eq!(g.object_of(&ids[*s], RELATIONS[*r]), Some(&ids[objects[0]]));
            }
            prop_assert_eq!(g.len(), oracle.values().map(Vec::len).sum::<usize>());
        }
    }

    #[test]
    fn snapshot_round_trip_preserves_queries(ops in prop::collection::vec(op(), 0..30)) {
        let (mut g, ids) = setup(ConflictMode::Replace);
        for op in &ops {
            match *op {
                Op::Add(s, r, o) => { g.add_fact(NewFact::new(ids[s].clone(), RELATIONS[r], ids[o].clone(), "t")).unwrap(); }
                Op::Remove(s, r) => { let _ = g.remove_fact(&ids[s], RELATIONS[r]); }
            }
        }
        let bytes = g.snapshot();
        let back = KnowledgeGraph::load(&bytes).unwrap();
        prop_assert_eq!(back.snapshot(), bytes);
        for sid in &ids {
            for r in RELATIONS {
                prop_assert_eq!(back.object_of(sid, r), g.object_of(sid, r));
            }
        }
    }
}
