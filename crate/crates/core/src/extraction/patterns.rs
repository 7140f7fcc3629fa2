//! Template extractor for cloze-style edit sentences such as
//! "X was created in the country of Y."

use regex::Regex;

use super::{triple_from_hint, EditStatement, ExtractError, ExtractedTriple, TripleExtractor};
use crate::relations::{InverseTable, CATALOG};

#[derive(Debug)]
struct CompiledPattern {
    relation: &'static str,
    regex: Regex,
}

#[derive(Debug)]
pub struct PatternExtractor {
    patterns: Vec<CompiledPattern>,
    inverses: InverseTable,
}

fn compile(template: &str) -> Regex {
    let mut source = String::from("(?i)^");
    let mut rest = template;
    while let Some(pos) = rest.find('{') {
        source.push_str(&regex::escape(&rest[..pos]));
        let slot_end = rest[pos..].find('}').expect("slot is closed") + pos;
        match &rest[pos + 1..slot_end] {
            "s" => source.push_str("(?P<s>.+?)"),
            "o" => source.push_str("(?P<o>.+?)"),
            other => panic!("unknown slot {other}"),
        }
        rest = &rest[slot_end + 1..];
    }
    source.push_str(&regex::escape(rest));
    source.push_str(r"\s*[.!]?$");
    Regex::new(&source).expect("catalog pattern compiles")
}

/// Split at sentence-final punctuation followed by whitespace and an
/// upper-case letter. A period closing a dotted abbreviation ("F.C.") does not
/// end a sentence.
pub(crate) fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(byte, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let Some(&(_, next)) = chars.get(i + 1) else {
            continue;
        };
        if !next.is_whitespace() {
            continue;
        }
        let upcoming = chars[i + 1..].iter().find(|(_, ch)| !ch.is_whitespace());
        if !upcoming.is_some_and(|(_, ch)| ch.is_uppercase()) {
            continue;
        }
        let word_start = text[..byte]
            .rfind(char::is_whitespace)
            .map(|p| p + 1)
            .unwrap_or(0);
        if c == '.' && text[word_start..byte].contains('.') {
            continue;
        }
        let sentence = text[start..=byte].trim();
        if !sentence.is_empty() {
            out.push(sentence);
        }
        start = byte + c.len_utf8();
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

impl PatternExtractor {
    pub fn new(inverses: InverseTable) -> Self {
        let patterns = CATALOG
            .iter()
            .flat_map(|spec| {
                spec.patterns.iter().map(|p| CompiledPattern {
                    relation: spec.label,
                    regex: compile(p),
                })
            })
            .collect();
        Self { patterns, inverses }
    }

    fn extract_sentence(&self, sentence: &str) -> Option<ExtractedTriple> {
        self.patterns.iter().find_map(|p| {
            let caps = p.regex.captures(sentence)?;
            let s = caps.name("s")?.as_str().trim();
            let o = caps.name("o")?.as_str().trim();
            (!s.is_empty() && !o.is_empty()).then(|| ExtractedTriple::new(s, p.relation, o))
        })
    }
}

impl TripleExtractor for PatternExtractor {
    fn extract(&self, statement: &EditStatement) -> Result<Vec<ExtractedTriple>, ExtractError> {
        if let Some(edit) = &statement.hint {
            return Ok(vec![triple_from_hint(edit)?]);
        }
        if statement.text.trim().is_empty() {
            return Err(ExtractError::EmptyStatement);
        }
        let mut out = Vec::new();
        for sentence in split_sentences(&statement.text) {
            let Some(triple) = self.extract_sentence(sentence) else {
                continue;
            };
            let companion = self.inverses.inverse_of(&triple.relation_label).map(|inv| {
                ExtractedTriple::new(
                    triple.object_mention.clone(),
                    inv,
                    triple.subject_mention.clone(),
                )
            });
            out.push(triple);
            out.extend(companion);
        }
        Ok(out)
    }
}
