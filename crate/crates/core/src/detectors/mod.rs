//! Entity and relation detectors.
//!
//! Both detectors are `(question, candidate) -> [0, 1]` scorers. The entity
//! detector picks the subject of a sub-question out of the proposed mentions
//! (plain argmax); the relation detector picks the relation among the
//! subject's stored relations and only lets it through when its score is
//! strictly above the threshold `alpha`.

mod lexical;
mod proposal;
mod remote;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::http::HttpError;
use crate::kg::KnowledgeGraph;

pub use lexical::{LexicalEntityScorer, LexicalRelationScorer};
pub use proposal::AliasScanProposer;
pub use remote::RemoteScorer;

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum DetectorError {
    #[error("scoring backend: {0}")]
    Backend(#[from] HttpError),
    #[error("invalid detector config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Longer candidate first, then lexicographically smaller.
    #[default]
    LongerThenLexicographic,
    Lexicographic,
    FirstSeen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub alpha: f64,
    pub entity_scorer: String,
    pub relation_scorer: String,
    pub tie_break: TieBreak,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            entity_scorer: "lexical".into(),
            relation_scorer: "lexical".into(),
            tie_break: TieBreak::default(),
        }
    }
}

impl DetectorConfig {
    pub fn with_alpha(alpha: f64) -> Result<Self, DetectorError> {
        let cfg = Self {
            alpha,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DetectorError::Config(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub candidate: String,
    pub score: f64,
}

/// Map any raw score into `[0, 1]`; NaN counts as no evidence.
pub fn clamp_score(raw: f64) -> f64 {
    if raw.is_nan() {
        0.0
    } else {
        raw.clamp(0.0, 1.0)
    }
}

/// `(question, candidate) -> [0, 1]`.
pub trait PairScorer: Send + Sync {
    fn score(&self, question: &str, candidate: &str) -> Result<f64, DetectorError>;
}

/// Proposes candidate subject mentions for a question.
pub trait EntityProposer: Send + Sync {
    fn propose(&self, question: &str, graph: &KnowledgeGraph) -> Vec<String>;
}

/// Retrieval gate: strictly greater than `alpha`.
pub fn exceeds_threshold(score: f64, alpha: f64) -> bool {
    score > alpha
}

fn tie_order(rule: TieBreak, a: (usize, &str), b: (usize, &str)) -> Ordering {
    // `Less` means `a` is preferred.
    match rule {
        TieBreak::LongerThenLexicographic => {
            b.1.chars()
                .count()
                .cmp(&a.1.chars().count())
                .then_with(|| a.1.cmp(b.1))
        }
        TieBreak::Lexicographic => a.1.cmp(b.1).then(a.0.cmp(&b.0)),
        TieBreak::FirstSeen => a.0.cmp(&b.0),
    }
}

/// Argmax over already-scored candidates. Only the order of scores matters.
pub fn pick_best(scored: &[ScoredCandidate], rule: TieBreak) -> Option<&ScoredCandidate> {
    scored
        .iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| tie_order(rule, (*ia, &a.candidate), (*ib, &b.candidate)))
        })
        .map(|(_, c)| c)
}

fn score_all<'c>(
    scorer: &dyn PairScorer,
    question: &str,
    candidates: impl IntoIterator<Item = &'c str>,
) -> Result<Vec<ScoredCandidate>, DetectorError> {
    candidates
        .into_iter()
        .map(|c| {
            Ok(ScoredCandidate {
                candidate: c.to_string(),
                score: clamp_score(scorer.score(question, c)?),
            })
        })
        .collect()
}

pub struct Detectors {
    pub config: DetectorConfig,
    proposer: Box<dyn EntityProposer>,
    entity_scorer: Box<dyn PairScorer>,
    relation_scorer: Box<dyn PairScorer>,
}

impl std::fmt::Debug for Detectors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Detectors")
            .field("config", &self.config)
            .finish()
    }
}

impl Detectors {
    pub fn new(
        config: DetectorConfig,
        proposer: Box<dyn EntityProposer>,
        entity_scorer: Box<dyn PairScorer>,
        relation_scorer: Box<dyn PairScorer>,
    ) -> Result<Self, DetectorError> {
        config.validate()?;
        Ok(Self {
            config,
            proposer,
            entity_scorer,
            relation_scorer,
        })
    }

    /// Alias-scan proposal with the lexical scorers and built-in paraphrases.
    pub fn baseline(config: DetectorConfig) -> Result<Self, DetectorError> {
        Self::new(
            config,
            Box::new(AliasScanProposer::default()),
            Box::new(LexicalEntityScorer),
            Box::new(LexicalRelationScorer::builtin()),
        )
    }

    pub fn with_relation_scorer(mut self, scorer: Box<dyn PairScorer>) -> Self {
        self.relation_scorer = scorer;
        self
    }

    pub fn with_entity_scorer(mut self, scorer: Box<dyn PairScorer>) -> Self {
        self.entity_scorer = scorer;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.config.alpha
    }

    pub fn propose_entities(&self, question: &str, graph: &KnowledgeGraph) -> Vec<String> {
        self.proposer.propose(question, graph)
    }

    pub fn score_entity(&self, question: &str, candidate: &str) -> Result<f64, DetectorError> {
        Ok(clamp_score(self.entity_scorer.score(question, candidate)?))
    }

    pub fn score_relation(&self, question: &str, relation: &str) -> Result<f64, DetectorError> {
        Ok(clamp_score(self.relation_scorer.score(question, relation)?))
    }

    pub fn select_subject(
        &self,
        question: &str,
        candidates: &[String],
    ) -> Result<Option<ScoredCandidate>, DetectorError> {
        let scored = score_all(
            self.entity_scorer.as_ref(),
            question,
            candidates.iter().map(String::as_str),
        )?;
        Ok(pick_best(&scored, self.config.tie_break).cloned())
    }

    /// Highest-scoring relation regardless of the threshold.
    pub fn best_relation<'r>(
        &self,
        question: &str,
        relations: impl IntoIterator<Item = &'r str>,
    ) -> Result<Option<ScoredCandidate>, DetectorError> {
        let scored = score_all(self.relation_scorer.as_ref(), question, relations)?;
        Ok(pick_best(&scored, self.config.tie_break).cloned())
    }

    /// Best relation, only if its score is strictly above `alpha`.
    pub fn select_relation<'r>(
        &self,
        question: &str,
        relations: impl IntoIterator<Item = &'r str>,
    ) -> Result<Option<ScoredCandidate>, DetectorError> {
        Ok(self
            .best_relation(question, relations)?
            .filter(|best| exceeds_threshold(best.score, self.config.alpha)))
    }
}
