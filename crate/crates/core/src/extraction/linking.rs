use serde::{Deserialize, Serialize};

use crate::http::{HttpError, HttpSettings, JsonClient};
use crate::kg::{EntityId, GraphError, KnowledgeGraph};

#[derive(Debug, thiserror::Error)]
pub enum LinkError {
    #[error("empty entity mention")]
    EmptyMention,
    #[error("external knowledge base lookup failed for {mention:?}: {source}")]
    Kb {
        mention: String,
        #[source]
        source: HttpError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Entity as described by an external knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntity {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub aliases: Vec<String>,
}

pub trait EntityKb: Send + Sync {
    fn lookup(&self, mention: &str) -> Result<Option<KbEntity>, HttpError>;
}

#[derive(Serialize)]
struct KbRequest<'a> {
    mention: &'a str,
}

#[derive(Deserialize)]
struct KbResponse {
    entity: Option<KbEntity>,
}

/// `POST {"mention": ...}` -> `{"entity": {"id", "label", "aliases"} | null}`.
#[derive(Debug)]
pub struct RemoteKb {
    client: JsonClient,
    url: String,
}

impl RemoteKb {
    pub fn new(url: impl Into<String>, settings: HttpSettings) -> Result<Self, HttpError> {
        Ok(Self {
            client: JsonClient::new(settings, None)?,
            url: url.into(),
        })
    }
}

impl EntityKb for RemoteKb {
    fn lookup(&self, mention: &str) -> Result<Option<KbEntity>, HttpError> {
        let resp: KbResponse = self.client.post_json(&self.url, &KbRequest { mention })?;
        Ok(resp.entity)
    }
}

/// Linking policy: local alias index first, then the optional external KB,
/// then a synthesized local entity.
#[derive(Clone, Copy, Default)]
pub struct Linker<'a> {
    kb: Option<&'a dyn EntityKb>,
    kb_mandatory: bool,
}

impl<'a> Linker<'a> {
    pub fn local() -> Self {
        Self::default()
    }

    pub fn with_kb(kb: &'a dyn EntityKb, mandatory: bool) -> Self {
        Self {
            kb: Some(kb),
            kb_mandatory: mandatory,
        }
    }

    pub fn link(&self, graph: &mut KnowledgeGraph, mention: &str) -> Result<EntityId, LinkError> {
        link_entity(graph, mention, self.kb, self.kb_mandatory)
    }
}

pub fn link_entity(
    graph: &mut KnowledgeGraph,
    mention: &str,
    kb: Option<&dyn EntityKb>,
    kb_mandatory: bool,
) -> Result<EntityId, LinkError> {
    let mention = mention.trim();
    if mention.is_empty() {
        return Err(LinkError::EmptyMention);
    }
    if let Some(id) = graph.resolve(mention) {
        return Ok(id.clone());
    }
    if let Some(kb) = kb {
        match kb.lookup(mention) {
            Ok(Some(entity)) => {
                let id = EntityId::new(entity.id.clone())?;
                let mut aliases = entity.aliases.clone();
                aliases.push(mention.to_string());
                return Ok(graph.register_entity_with_id(
                    id,
                    &entity.label,
                    &aliases,
                    Some(&entity.id),
                )?);
            }
            Ok(None) => {}
            Err(source) if kb_mandatory => {
                return Err(LinkError::Kb {
                    mention: mention.to_string(),
                    source,
                })
            }
            Err(source) => {
                tracing::warn!(mention, error = %source, "knowledge base lookup failed, linking locally");
            }
        }
    }
    Ok(graph.register_entity::<&str>(mention, &[], None)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct FixedKb(Option<KbEntity>, bool);

    impl EntityKb for FixedKb {
        fn lookup(&self, _mention: &str) -> Result<Option<KbEntity>, HttpError> {
            if self.1 {
                return Err(HttpError::Setup("offline".into()));
            }
            Ok(self.0.clone())
        }
    }

    #[test]
    fn shared_alias_record_links_to_same_entity() {
        let mut g = KnowledgeGraph::new();
        let us = g.register_entity("United States", &["U.S."], None).unwrap();
        assert_eq!(link_entity(&mut g, "U.S.", None, false).unwrap(), us);
        assert_eq!(
            link_entity(&mut g, "United States", None, false).unwrap(),
            us
        );
    }

    #[test]
    fn unseen_mention_synthesizes_local_entity() {
        let mut g = KnowledgeGraph::new();
        let id = link_entity(&mut g, "Watford F.C.", None, false).unwrap();
        assert!(id.as_str().starts_with("local:"));
        assert_eq!(g.label(&id), Some("Watford F.C."));
    }

    #[test]
    fn empty_mention_rejected() {
        let mut g = KnowledgeGraph::new();
        assert!(matches!(
            link_entity(&mut g, "  ", None, false),
            Err(LinkError::EmptyMention)
        ));
    }

    #[test]
    fn kb_hit_uses_external_id_and_aliases() {
        let kb = FixedKb(
            Some(KbEntity {
                id: "Q30".into(),
                label: "United States of America".into(),
                aliases: vec!["USA".into()],
            }),
            false,
        );
        let mut g = KnowledgeGraph::new();
        let id = link_entity(&mut g, "U.S.", Some(&kb), true).unwrap();
        assert_eq!(id.as_str(), "Q30");
        assert_eq!(g.resolve("usa"), Some(&id));
        assert_eq!(g.resolve("u.s."), Some(&id));
        assert_eq!(g.entity(&id).unwrap().external_ref.as_deref(), Some("Q30"));
    }

    #[test]
    fn kb_failure_mandatory_vs_optional() {
        let kb = FixedKb(None, true);
        let mut g = KnowledgeGraph::new();
        assert!(matches!(
            link_entity(&mut g, "Brazil", Some(&kb), true),
            Err(LinkError::Kb { .. })
        ));
        let id = link_entity(&mut g, "Brazil", Some(&kb), false).unwrap();
        assert!(id.as_str().starts_with("local:"));
    }
}
