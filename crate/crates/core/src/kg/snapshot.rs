//! Line-delimited JSON snapshots.
//!
//! Layout: one header line, then one line per entity (sorted by id), then one
//! line per fact (sorted by sequence number).
//!
//! ```text
//! {"format":"kgedit-graph","version":1,"conflict_mode":"replace","next_seq":3,"next_local":4,"entities":4,"facts":3}
//! {"id":"local:000001","label":"Brazil","aliases":["Brazil"],"external_ref":null}
//! {"s":"local:000002","r":"country of origin","o":"local:000001","src":"...","seq":1}
//! ```

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    normalize_alias, normalize_relation, ConflictMode, EditedFact, EntityId, EntityRecord,
    GraphError, KnowledgeGraph, Result,
};

pub const SNAPSHOT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "kgedit-graph";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    conflict_mode: ConflictMode,
    next_seq: u64,
    next_local: u64,
    entities: usize,
    facts: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntityLine {
    id: EntityId,
    label: String,
    aliases: BTreeSet<String>,
    external_ref: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactLine {
    s: EntityId,
    r: String,
    o: EntityId,
    src: String,
    seq: u64,
}

fn format_err(line: usize, msg: impl std::fmt::Display) -> GraphError {
    GraphError::Format(format!("line {line}: {msg}"))
}

impl KnowledgeGraph {
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let header = Header {
            format: FORMAT_NAME.into(),
            version: SNAPSHOT_VERSION,
            conflict_mode: self.mode,
            next_seq: self.next_seq,
            next_local: self.next_local,
            entities: self.entities.len(),
            facts: self.len(),
        };
        let to_io = |e: serde_json::Error| GraphError::Io(e.into());
        serde_json::to_writer(&mut out, &header).map_err(to_io)?;
        out.write_all(b"\n")?;
        for record in self.entities.values() {
            let line = EntityLine {
                id: record.id.clone(),
                label: record.canonical_label.clone(),
                aliases: record.aliases.clone(),
                external_ref: record.external_ref.clone(),
            };
            serde_json::to_writer(&mut out, &line).map_err(to_io)?;
            out.write_all(b"\n")?;
        }
        let mut facts: Vec<&EditedFact> = self.facts().collect();
        facts.sort_by_key(|f| f.seq);
        for fact in facts {
            let line = FactLine {
                s: fact.subject.clone(),
                r: fact.relation.clone(),
                o: fact.object.clone(),
                src: fact.source_text.clone(),
                seq: fact.seq,
            };
            serde_json::to_writer(&mut out, &line).map_err(to_io)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn snapshot(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn load_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header_line = match lines.next() {
            Some((_, line)) => line?,
            None => return Err(GraphError::Format("empty snapshot".into())),
        };
        let header: Header = serde_json::from_str(&header_line).map_err(|e| format_err(1, e))?;
        if header.format != FORMAT_NAME {
            return Err(format_err(1, format!("unknown format {:?}", header.format)));
        }
        if header.version != SNAPSHOT_VERSION {
            return Err(format_err(
                1,
                format!("unsupported version {}", header.version),
            ));
        }

        let mut graph = KnowledgeGraph::with_mode(header.conflict_mode);
        let mut max_seq = 0u64;
        let mut seen_entities = 0usize;
        let mut seen_facts = 0usize;
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if seen_entities < header.entities {
                let e: EntityLine =
                    serde_json::from_str(&line).map_err(|e| format_err(lineno, e))?;
                if !e.aliases.contains(&e.label) {
                    return Err(format_err(lineno, "canonical label missing from aliases"));
                }
                for alias in &e.aliases {
                    let key = normalize_alias(alias);
                    if key.is_empty() {
                        return Err(format_err(lineno, format!("empty alias {alias:?}")));
                    }
                    if let Some(prev) = graph.alias_index.insert(key, e.id.clone()) {
                        if prev != e.id {
                            return Err(format_err(
                                lineno,
                                format!("alias {alias:?} claimed by {prev} and {}", e.id),
                            ));
                        }
                    }
                }
                let record = EntityRecord {
                    id: e.id.clone(),
                    canonical_label: e.label,
                    aliases: e.aliases,
                    external_ref: e.external_ref,
                };
                if graph.entities.insert(e.id.clone(), record).is_some() {
                    return Err(format_err(lineno, format!("duplicate entity {}", e.id)));
                }
                seen_entities += 1;
            } else {
                let f: FactLine = serde_json::from_str(&line).map_err(|e| format_err(lineno, e))?;
                for id in [&f.s, &f.o] {
                    if !graph.entities.contains_key(id) {
                        return Err(format_err(lineno, format!("fact references unknown {id}")));
                    }
                }
                let relation = normalize_relation(&f.r);
                if relation.is_empty() {
                    return Err(format_err(lineno, "empty relation"));
                }
                let slot = graph
                    .facts
                    .entry(f.s.clone())
                    .or_default()
                    .entry(relation)
                    .or_default();
                if graph.mode == ConflictMode::Replace && !slot.is_empty() {
                    return Err(format_err(
                        lineno,
                        format!("second fact for ({}, {})", f.s, f.r),
                    ));
                }
                if slot.last().is_some_and(|prev| prev.seq >= f.seq) {
                    return Err(format_err(lineno, "facts out of sequence order"));
                }
                max_seq = max_seq.max(f.seq);
                slot.push(EditedFact {
                    subject: f.s,
                    relation: normalize_relation(&f.r),
                    object: f.o,
                    source_text: f.src,
                    seq: f.seq,
                });
                seen_facts += 1;
            }
        }
        if seen_entities != header.entities || seen_facts != header.facts {
            return Err(GraphError::Format(format!(
                "truncated snapshot: header announces {} entities / {} facts, found {} / {}",
                header.entities, header.facts, seen_entities, seen_facts
            )));
        }
        graph.next_seq = header.next_seq.max(max_seq);
        graph.next_local = header.next_local;
        Ok(graph)
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        Self::load_snapshot(bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::NewFact;

    fn sample() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        let af = g
            .register_entity("Association football", &["soccer"], None)
            .unwrap();
        let br = g
            .register_entity::<&str>("Brazil", &[], Some("Q155"))
            .unwrap();
        let africa = g.register_entity::<&str>("Africa", &[], None).unwrap();
        g.add_fact(NewFact::new(
            af.clone(),
            "country of origin",
            br.clone(),
            "t",
        ))
        .unwrap();
        g.add_fact(NewFact::new(br.clone(), "sport", af, "t"))
            .unwrap();
        g.add_fact(NewFact::new(br, "continent", africa, "t"))
            .unwrap();
        g
    }

    #[test]
    fn round_trip_preserves_queries() {
        let g = sample();
        let loaded = KnowledgeGraph::load(&g.snapshot()).unwrap();
        assert_eq!(loaded.snapshot(), g.snapshot());
        let br = loaded.resolve("brazil").unwrap().clone();
        assert_eq!(loaded.relations_of(&br), g.relations_of(&br));
        assert_eq!(loaded.last_seq(), 3);
        assert_eq!(
            loaded.entity(&br).unwrap().external_ref.as_deref(),
            Some("Q155")
        );
    }

    #[test]
    fn empty_graph_round_trip() {
        let g = KnowledgeGraph::new();
        let loaded = KnowledgeGraph::load(&g.snapshot()).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(loaded.entity_count(), 0);
    }

    #[test]
    fn truncated_stream_is_rejected() {
        let bytes = sample().snapshot();
        let text = String::from_utf8(bytes).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Dropped trailing line.
        let cut = lines[..lines.len() - 1].join("\n");
        assert!(matches!(
            KnowledgeGraph::load(cut.as_bytes()),
            Err(GraphError::Format(_))
        ));
        // Cut mid-line.
        let half = &text[..text.len() - 10];
        assert!(matches!(
            KnowledgeGraph::load(half.as_bytes()),
            Err(GraphError::Format(_))
        ));
        assert!(KnowledgeGraph::load(b"").is_err());
    }

    #[test]
    fn unknown_version_is_rejected() {
        let text = String::from_utf8(sample().snapshot()).unwrap();
        let bumped = text.replacen("\"version\":1", "\"version\":9", 1);
        let err = KnowledgeGraph::load(bumped.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unsupported version"));
    }
}
