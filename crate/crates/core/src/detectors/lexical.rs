//! Lexical baseline scorers. No model, no network.

use std::collections::HashSet;

use super::{DetectorError, PairScorer};
use crate::normalize::{normalize_alias, word_tokens};
use crate::relations::ParaphraseTable;

const STOPWORDS: &[&str] = &[
    "a",
    "an",
    "and",
    "are",
    "as",
    "at",
    "be",
    "been",
    "being",
    "by",
    "can",
    "current",
    "currently",
    "did",
    "do",
    "does",
    "for",
    "from",
    "had",
    "has",
    "have",
    "how",
    "in",
    "is",
    "it",
    "its",
    "name",
    "of",
    "on",
    "one",
    "or",
    "that",
    "the",
    "this",
    "to",
    "was",
    "were",
    "what",
    "when",
    "where",
    "which",
    "who",
    "whom",
    "whose",
    "why",
    "with",
];

fn stem(token: &str) -> String {
    if token.chars().count() > 3 && token.ends_with('s') && !token.ends_with("ss") {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

fn content_tokens(text: &str) -> HashSet<String> {
    word_tokens(text)
        .into_iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .map(|t| stem(&t))
        .collect()
}

/// Token coverage of the candidate inside the question, with a small bonus
/// for an early position and for a contiguous match:
/// `min(1, 0.9*cov + 0.1*cov*earliness + 0.1*[contiguous])`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalEntityScorer;

impl LexicalEntityScorer {
    pub fn raw_score(question: &str, candidate: &str) -> f64 {
        let q = word_tokens(question);
        let c = word_tokens(&normalize_alias(candidate));
        if q.is_empty() || c.is_empty() {
            return 0.0;
        }
        let matched = c.iter().filter(|t| q.contains(t)).count();
        if matched == 0 {
            return 0.0;
        }
        let coverage = matched as f64 / c.len() as f64;
        let phrase_at = q.windows(c.len()).position(|w| w == c.as_slice());
        let first = phrase_at
            .or_else(|| q.iter().position(|t| c.contains(t)))
            .unwrap_or(0);
        let earliness = 1.0 - first as f64 / q.len() as f64;
        let contiguous = if phrase_at.is_some() { 1.0 } else { 0.0 };
        (0.9 * coverage + 0.1 * coverage * earliness + 0.1 * contiguous).min(1.0)
    }
}

impl PairScorer for LexicalEntityScorer {
    fn score(&self, question: &str, candidate: &str) -> Result<f64, DetectorError> {
        Ok(Self::raw_score(question, candidate))
    }
}

/// Best content-token recall of the relation label or any of its
/// paraphrases against the question.
#[derive(Debug, Clone)]
pub struct LexicalRelationScorer {
    paraphrases: ParaphraseTable,
}

impl LexicalRelationScorer {
    pub fn new(paraphrases: ParaphraseTable) -> Self {
        Self { paraphrases }
    }

    pub fn builtin() -> Self {
        Self::new(ParaphraseTable::builtin())
    }

    pub fn raw_score(&self, question: &str, relation: &str) -> f64 {
        let q = content_tokens(question);
        std::iter::once(relation)
            .chain(
                self.paraphrases
                    .phrases(relation)
                    .iter()
                    .map(String::as_str),
            )
            .filter_map(|phrase| {
                let p = content_tokens(phrase);
                (!p.is_empty()).then(|| p.intersection(&q).count() as f64 / p.len() as f64)
            })
            .fold(0.0, f64::max)
    }
}

impl PairScorer for LexicalRelationScorer {
    fn score(&self, question: &str, relation: &str) -> Result<f64, DetectorError> {
        Ok(self.raw_score(question, relation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: &str = "Which country was Association Football created in?";

    #[test]
    fn contiguous_full_match_scores_one() {
        assert_eq!(
            LexicalEntityScorer::raw_score(Q, "Association Football"),
            1.0
        );
        assert_eq!(
            LexicalEntityScorer::raw_score(Q, "the Association football."),
            1.0
        );
    }

    #[test]
    fn partial_match_hand_computed() {
        // tokens: which country was association football created in (7)
        // "Association Club": cov 1/2, first hit at 3, earliness 4/7, not contiguous
        let expected = 0.9 * 0.5 + 0.1 * 0.5 * (4.0 / 7.0);
        let got = LexicalEntityScorer::raw_score(Q, "Association Club");
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        assert_eq!(LexicalEntityScorer::raw_score(Q, "Brazil"), 0.0);
    }

    #[test]
    fn relation_scores_follow_paraphrases() {
        let r = LexicalRelationScorer::builtin();
        let q = "Which continent is Brazil located in?";
        assert_eq!(r.raw_score(q, "continent"), 1.0);
        assert_eq!(r.raw_score(q, "sport"), 0.0);
        assert_eq!(r.raw_score(q, "capital"), 0.0);
        // "located in the country" -> {located, country}: one of two present
        assert_eq!(r.raw_score(q, "country"), 0.5);
        assert_eq!(r.raw_score(Q, "country of origin"), 1.0);
    }

    #[test]
    fn plural_questions_match_singular_labels() {
        let r = LexicalRelationScorer::builtin();
        assert_eq!(
            r.raw_score("Which sports is Brazil known for?", "sport"),
            1.0
        );
        assert_eq!(stem("class"), "class");
        assert_eq!(stem("bus"), "bus");
    }
}
