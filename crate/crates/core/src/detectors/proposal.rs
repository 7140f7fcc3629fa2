//! Candidate subject proposal: longest alias-index matches first, then
//! capitalized spans the graph has never seen.

use std::collections::HashSet;

use super::EntityProposer;
use crate::kg::KnowledgeGraph;
use crate::normalize::normalize_alias;

const ARTICLES: &[&str] = &["a", "an", "the"];
const QUESTION_OPENERS: &[&str] = &[
    "which", "what", "who", "whom", "whose", "where", "when", "why", "how", "is", "was", "are",
    "were", "does", "did", "do", "in", "on", "at", "for", "from", "to", "of", "the", "a", "an",
    "name", "can", "could", "would", "will", "has", "have",
];
const CONNECTORS: &[&str] = &[
    "of", "de", "the", "and", "van", "von", "da", "du", "la", "le", "del",
];

const LEADING: &[char] = &['(', '[', '{', '"', '\'', '\u{201c}', '\u{2018}'];
const TRAILING: &[char] = &[
    ')', ']', '}', '"', '\'', '\u{201d}', '\u{2019}', '?', '!', ',', ';', ':',
];

#[derive(Debug, Clone)]
struct Token<'q> {
    raw: &'q str,
    /// Byte range of the token with surrounding brackets and punctuation removed.
    core: (usize, usize),
    ends_clause: bool,
}

fn tokenize(question: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in question.split_whitespace() {
        let start = offset
            + question[offset..]
                .find(raw)
                .expect("token comes from input");
        offset = start + raw.len();
        let lead = raw.len() - raw.trim_start_matches(LEADING).len();
        let mut body = &raw[lead..];
        body = body.trim_end_matches(TRAILING);
        // A lone trailing period ends the clause; a dotted abbreviation keeps it.
        let mut ends_clause = body.len() < raw.len() - lead
            && raw[lead + body.len()..]
                .chars()
                .any(|c| !matches!(c, ')' | ']' | '}' | '"' | '\''));
        if body.ends_with('.') && !body[..body.len() - 1].contains('.') {
            body = &body[..body.len() - 1];
            ends_clause = true;
        }
        out.push(Token {
            raw,
            core: (start + lead, start + lead + body.len()),
            ends_clause,
        });
    }
    out
}

fn lower(question: &str, t: &Token<'_>) -> String {
    question[t.core.0..t.core.1].to_lowercase()
}

fn strip_possessive(s: &str) -> Option<&str> {
    s.strip_suffix("'s")
        .or_else(|| s.strip_suffix("\u{2019}s"))
        .filter(|rest| !rest.is_empty())
}

#[derive(Debug, Clone)]
pub struct AliasScanProposer {
    pub max_ngram: usize,
}

impl Default for AliasScanProposer {
    fn default() -> Self {
        Self { max_ngram: 8 }
    }
}

impl AliasScanProposer {
    fn alias_matches(
        &self,
        question: &str,
        tokens: &[Token<'_>],
        graph: &KnowledgeGraph,
    ) -> Vec<String> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            if ARTICLES.contains(&lower(question, &tokens[i]).as_str()) {
                i += 1;
                continue;
            }
            let longest = self.max_ngram.min(tokens.len() - i);
            let hit = (1..=longest).rev().find_map(|len| {
                let span = &question[tokens[i].core.0..tokens[i + len - 1].core.1];
                if graph.resolve(span).is_some() {
                    return Some((len, span));
                }
                strip_possessive(span)
                    .filter(|s| graph.resolve(s).is_some())
                    .map(|s| (len, s))
            });
            match hit {
                Some((len, span)) => {
                    out.push(span.to_string());
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }

    fn capitalized_spans(question: &str, tokens: &[Token<'_>]) -> Vec<String> {
        let starts_upper = |t: &Token<'_>| {
            !t.raw.starts_with('(')
                && question[t.core.0..t.core.1]
                    .chars()
                    .next()
                    .is_some_and(char::is_uppercase)
        };
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let t = &tokens[i];
            let opener = i == 0 && QUESTION_OPENERS.contains(&lower(question, t).as_str());
            if !starts_upper(t) || opener {
                i += 1;
                continue;
            }
            let mut end = i;
            while !tokens[end].ends_clause && end + 1 < tokens.len() {
                let next = &tokens[end + 1];
                if starts_upper(next) {
                    end += 1;
                } else if CONNECTORS.contains(&lower(question, next).as_str())
                    && !next.ends_clause
                    && tokens.get(end + 2).is_some_and(starts_upper)
                {
                    end += 2;
                } else {
                    break;
                }
            }
            let span = &question[t.core.0..tokens[end].core.1];
            let span = strip_possessive(span).unwrap_or(span);
            out.push(span.to_string());
            i = end + 1;
        }
        out
    }
}

impl EntityProposer for AliasScanProposer {
    fn propose(&self, question: &str, graph: &KnowledgeGraph) -> Vec<String> {
        let tokens = tokenize(question);
        let mut seen = HashSet::new();
        self.alias_matches(question, &tokens, graph)
            .into_iter()
            .chain(Self::capitalized_spans(question, &tokens))
            .filter(|c| !c.is_empty() && seen.insert(normalize_alias(c)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph() -> KnowledgeGraph {
        let mut g = KnowledgeGraph::new();
        g.register_entity("Association football", &["soccer", "football"], None)
            .unwrap();
        g.register_entity("Brazil", &["Federative Republic of Brazil"], None)
            .unwrap();
        g
    }

    fn propose(q: &str) -> Vec<String> {
        AliasScanProposer::default().propose(q, &graph())
    }

    #[test]
    fn longest_alias_match_wins() {
        assert_eq!(
            propose("Which country was Association Football (Soccer) created in?"),
            vec!["Association Football", "Soccer"]
        );
    }

    #[test]
    fn possessive_and_trailing_punctuation() {
        assert_eq!(propose("What is Brazil's capital?"), vec!["Brazil"]);
        assert_eq!(
            propose("Which continent is Brazil located in?"),
            vec!["Brazil"]
        );
    }

    #[test]
    fn unseen_capitalized_spans_are_proposed() {
        assert_eq!(
            propose("Which sport is Watford F.C. associated with?"),
            vec!["Watford F.C."]
        );
        assert_eq!(
            propose("Who is the head of state of United States of America?"),
            vec!["United States of America"]
        );
        assert!(propose("what is the capital?").is_empty());
    }

    #[test]
    fn duplicates_collapse_by_normalized_form() {
        assert_eq!(propose("Is Brazil bigger than brazil?"), vec!["Brazil"]);
    }
}
