//! String normalization shared by linking, oracle lookup and answer matching.
//!
//! Two rules live here:
//!
//! * [`normalize_alias`] keys the entity alias index: case-fold, trim, collapse
//!   internal whitespace, strip a leading English article and trailing
//!   punctuation.
//! * [`normalize_answer`] is the comparison rule used by the oracle backend and
//!   by metric computation. It applies everything `normalize_alias` does and
//!   additionally drops a trailing parenthetical, so that
//!   `"Association Football (Soccer)."` and `"association football"` compare
//!   equal.

const ARTICLES: [&str; 3] = ["the", "a", "an"];

fn collapse_lowercase(input: &str) -> String {
    input
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn strip_leading_article(s: &str) -> &str {
    for article in ARTICLES {
        if let Some(rest) = s.strip_prefix(article) {
            if let Some(rest) = rest.strip_prefix(' ') {
                if !rest.is_empty() {
                    return rest;
                }
            }
        }
    }
    s
}

fn strip_trailing_punctuation(s: &str) -> &str {
    s.trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')' && c != ']')
        .trim_end()
}

fn strip_parenthetical_suffix(s: &str) -> &str {
    let trimmed = s.trim_end();
    if trimmed.ends_with(')') {
        if let Some(open) = trimmed.rfind('(') {
            let head = trimmed[..open].trim_end();
            if !head.is_empty() {
                return head;
            }
        }
    }
    trimmed
}

/// Normal form used as the key of the alias index.
pub fn normalize_alias(input: &str) -> String {
    let collapsed = collapse_lowercase(input);
    let no_article = strip_leading_article(&collapsed);
    strip_trailing_punctuation(no_article).to_string()
}

/// Normal form used for answer comparison and closed-world oracle keys.
pub fn normalize_answer(input: &str) -> String {
    let collapsed = collapse_lowercase(input);
    let mut current: &str = &collapsed;
    // Punctuation may sit on either side of a parenthetical: "X (Y)." / "X. (Y)".
    loop {
        let before = current;
        current = strip_trailing_punctuation(current);
        current = strip_parenthetical_suffix(current);
        if current == before {
            break;
        }
    }
    strip_leading_article(current).to_string()
}

/// Lower-cased word tokens with surrounding punctuation removed and a
/// possessive `'s` dropped. Internal punctuation (`f.c`, `u.s`) is kept.
pub fn word_tokens(input: &str) -> Vec<String> {
    input
        .split(|c: char| c.is_whitespace() || c == '(' || c == ')' || c == '/')
        .filter_map(|raw| {
            let mut tok = raw
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            for suffix in ["'s", "\u{2019}s"] {
                if tok.len() > suffix.len() && tok.ends_with(suffix) {
                    tok.truncate(tok.len() - suffix.len());
                }
            }
            (!tok.is_empty()).then_some(tok)
        })
        .collect()
}
