//! Sentence splitting and word tokenization.
//!
//! The word tokenizer is shared by the lexicon compiler and the extractor so
//! that a surface form and a mention in running text always fold to the same
//! token sequence.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

/// One folded word with its byte span `[start, end)` in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub folded: String,
    pub span: (usize, usize),
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.folded
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    /// Byte offset of `text` inside the text it was split from.
    pub offset: usize,
    pub tokens: Vec<Token>,
}

const ABBREVIATIONS: &[&str] = &["e.g", "i.e", "et al", "vs", "fig", "cf", "approx"];

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}' | '\u{2010}' | '\u{2011}')
}

/// Case fold used for every token comparison in the crate.
pub fn fold(token: &str) -> Cow<'_, str> {
    if token.chars().any(|c| c.is_uppercase()) {
        Cow::Owned(token.to_lowercase())
    } else {
        Cow::Borrowed(token)
    }
}

/// Splits `text` into maximal runs of letters and digits. A hyphen or
/// apostrophe stays inside a token only when both of its neighbours are
/// alphanumeric; every other character separates tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        loop {
            if end < chars.len() && chars[end].1.is_alphanumeric() {
                end += 1;
            } else if end + 1 < chars.len()
                && is_joiner(chars[end].1)
                && chars[end + 1].1.is_alphanumeric()
            {
                end += 2;
            } else {
                break;
            }
        }
        let lo = chars[start].0;
        let hi = chars.get(end).map_or(text.len(), |c| c.0);
        tokens.push(Token {
            folded: fold(&text[lo..hi]).into_owned(),
            span: (lo, hi),
        });
        i = end;
    }
    tokens
}

/// Folded token strings only; the form used for surface-form registration.
pub fn fold_tokens(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.folded).collect()
}

fn ends_with_abbreviation(before: &str) -> bool {
    let lower = before.to_lowercase();
    ABBREVIATIONS.iter().any(|abbr| {
        lower.ends_with(abbr) && {
            let head = &lower[..lower.len() - abbr.len()];
            head.chars().next_back().map_or(true, |c| !c.is_alphanumeric())
        }
    })
}

/// Splits text into sentences. A sentence ends at `.`, `!` or `?` followed by
/// whitespace and then an uppercase letter or a digit, unless the period
/// closes a known abbreviation such as "e.g." or "et al.".
///
/// Sentence texts are trimmed; the gaps between consecutive sentences are
/// whitespace only.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut bounds = Vec::new();
    let mut seg_start = 0;
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && chars[j].1.is_whitespace() {
            j += 1;
        }
        if j == i + 1 || j >= chars.len() {
            continue;
        }
        let next = chars[j].1;
        if !(next.is_uppercase() || next.is_ascii_digit()) {
            continue;
        }
        if c == '.' && ends_with_abbreviation(&text[seg_start..pos]) {
            continue;
        }
        let end = pos + c.len_utf8();
        bounds.push((seg_start, end));
        seg_start = chars[j].0;
    }
    bounds.push((seg_start, text.len()));

    bounds
        .into_iter()
        .filter_map(|(lo, hi)| {
            let raw = &text[lo..hi];
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                return None;
            }
            let offset = lo + (raw.len() - raw.trim_start().len());
            Some(Sentence {
                text: trimmed.to_string(),
                offset,
                tokens: tokenize(trimmed),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(text: &str) -> Vec<String> {
        fold_tokens(text)
    }

    #[test]
    fn hyphens_and_apostrophes_stay_inside_tokens() {
        assert_eq!(words("Set-shifting deficits!"), ["set-shifting", "deficits"]);
        assert_eq!(words("Parkinson's disease"), ["parkinson's", "disease"]);
        assert_eq!(words("A1-receptor"), ["a1-receptor"]);
    }

    #[test]
    fn dangling_joiners_are_separators() {
        assert_eq!(words("-pre- post' 'x"), ["pre", "post", "x"]);
        assert_eq!(words("a--b"), ["a", "b"]);
    }

    #[test]
    fn spans_point_back_into_text() {
        let text = "Über (CA1) neurons";
        for t in tokenize(text) {
            assert_eq!(fold(&text[t.span.0..t.span.1]), t.folded);
        }
        assert_eq!(words(text), ["über", "ca1", "neurons"]);
    }

    #[test]
    fn two_plain_sentences() {
        let s = split_sentences("Dopamine modulates memory. The cortex is large.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].text, "Dopamine modulates memory.");
        assert_eq!(s[1].text, "The cortex is large.");
    }

    #[test]
    fn abbreviation_does_not_split() {
        let s = split_sentences("Deficits (e.g. memory loss) occur. More follows.");
        let texts: Vec<_> = s.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["Deficits (e.g. memory loss) occur.", "More follows."]);

        let s = split_sentences("As shown by Smith et al. Mice were used. See Fig. 2 here.");
        let texts: Vec<_> = s.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["As shown by Smith et al. Mice were used.", "See Fig. 2 here."]);
    }

    #[test]
    fn lowercase_continuation_and_digits() {
        let s = split_sentences("We used 3.5 mg. 12 mice survived? yes they did.");
        let texts: Vec<_> = s.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(texts, ["We used 3.5 mg.", "12 mice survived? yes they did."]);
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("   \n").is_empty());
    }
}
