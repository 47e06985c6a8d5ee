//! Text normalization, tag stripping and sentence segmentation.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

/// Lowercases `raw`, turns every non-alphanumeric character into a separator
/// and returns the resulting tokens. `"covid-19"` becomes `["covid", "19"]`.
pub fn normalize_text(raw: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Number of whitespace-separated words.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Collapses every whitespace run to a single space and trims both ends.
pub fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Removes markup tags and decodes the handful of entities that survive in
/// crawled pages. Not an HTML parser: `<script>` bodies are kept as text.
pub fn strip_tags(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut in_tag = false;
    for ch in html.chars() {
        match ch {
            '<' => {
                in_tag = true;
                out.push(' ');
            }
            '>' if in_tag => in_tag = false,
            _ if !in_tag => out.push(ch),
            _ => {}
        }
    }
    const ENTITIES: [(&str, &str); 6] = [
        ("&nbsp;", " "),
        ("&lt;", "<"),
        ("&gt;", ">"),
        ("&quot;", "\""),
        ("&#39;", "'"),
        ("&amp;", "&"),
    ];
    let mut decoded = out;
    for (entity, replacement) in ENTITIES {
        if decoded.contains(entity) {
            decoded = decoded.replace(entity, replacement);
        }
    }
    decoded
}

/// Abbreviations that never end a sentence.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "al.", "approx.", "ca.", "cf.", "dr.", "e.g.", "etc.", "fig.", "figs.", "i.e.", "inc.", "mg.", "mr.", "mrs.",
    "ms.", "no.", "prof.", "ref.", "resp.", "st.", "vol.", "vs.",
];

/// Rule-based splitter: a sentence ends at `.`, `!` or `?` (plus any closing
/// quotes or brackets) followed by whitespace and a capital letter, or by
/// the end of the text. A period closing a listed abbreviation never splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceSplitter {
    abbreviations: BTreeSet<String>,
}

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::new(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl SentenceSplitter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let abbreviations = abbreviations
            .into_iter()
            .filter_map(|a| {
                // multi-word entries ("et al.") are keyed by their last word
                let last = a.as_ref().split_whitespace().last()?.to_lowercase();
                Some(if last.ends_with('.') {
                    last
                } else {
                    let mut s = last;
                    s.push('.');
                    s
                })
            })
            .collect();
        Self { abbreviations }
    }

    /// Parses an abbreviation list: one entry per line, blank lines and
    /// `#` comments ignored.
    pub fn from_list(list: &str) -> Self {
        Self::new(
            list.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn abbreviations(&self) -> impl Iterator<Item = &str> {
        self.abbreviations.iter().map(String::as_str)
    }

    /// Byte ranges of the trimmed sentences of `text`, in order.
    pub fn spans(&self, text: &str) -> Vec<Range<usize>> {
        let bytes = text.as_bytes();
        let mut spans = Vec::new();
        let mut start = 0;
        let mut iter = text.char_indices().peekable();
        while let Some((i, ch)) = iter.next() {
            if !matches!(ch, '.' | '!' | '?') {
                continue;
            }
            // swallow the rest of the terminator run: "?!", ".)", ".\""
            let mut end = i + ch.len_utf8();
            while let Some(&(j, next)) = iter.peek() {
                if matches!(next, '.' | '!' | '?' | ')' | ']' | '"' | '\'' | '\u{201d}' | '\u{2019}') {
                    end = j + next.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let rest = &text[end..];
            let trimmed = rest.trim_start();
            let boundary = if trimmed.is_empty() {
                true
            } else if trimmed.len() == rest.len() {
                false
            } else {
                trimmed.chars().next().is_some_and(char::is_uppercase)
            };
            if !boundary || (ch == '.' && self.is_abbreviation(text, i)) {
                continue;
            }
            push_trimmed(&mut spans, text, start..end);
            start = end + (rest.len() - trimmed.len());
            if start >= bytes.len() {
                break;
            }
        }
        if start < bytes.len() {
            push_trimmed(&mut spans, text, start..bytes.len());
        }
        spans
    }

    /// Sentences of `text` as sub-slices.
    pub fn split<'a>(&self, text: &'a str) -> Vec<&'a str> {
        self.spans(text).into_iter().map(|r| &text[r]).collect()
    }

    fn is_abbreviation(&self, text: &str, period: usize) -> bool {
        let word_start = text[..period]
            .rfind(char::is_whitespace)
            .map_or(0, |p| p + text[p..].chars().next().map_or(1, char::len_utf8));
        let word = text[word_start..=period].trim_start_matches(['(', '[', '"', '\'']);
        if word.len() <= 1 {
            return false;
        }
        self.abbreviations.contains(&word.to_lowercase())
    }
}

fn push_trimmed(spans: &mut Vec<Range<usize>>, text: &str, range: Range<usize>) {
    let slice = &text[range.clone()];
    let lead = slice.len() - slice.trim_start().len();
    let trail = slice.len() - slice.trim_end().len();
    if lead + trail < slice.len() {
        spans.push(range.start + lead..range.end - trail);
    }
}

/// Normalized tokens joined by single spaces; equal keys mean "same text"
/// for deduplication and entity matching.
pub fn normalized_key(text: &str) -> String {
    let tokens = normalize_text(text);
    let mut key = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            key.push(' ');
        }
        key.push_str(t);
    }
    key
}

pub(crate) fn join_nonempty<'a>(parts: impl IntoIterator<Item = &'a str>, sep: &str) -> String {
    let mut out = String::new();
    for part in parts.into_iter().filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push_str(sep);
        }
        out.push_str(part);
    }
    out
}

pub(crate) fn lowercase_trimmed(s: &str) -> String {
    s.trim().to_lowercase().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn normalize_splits_on_punctuation() {
        assert_eq!(normalize_text("Ibuprofen, COVID-19!"), vec!["ibuprofen", "covid", "19"]);
        assert!(normalize_text("").is_empty());
        assert_eq!(normalize_text("covid covid"), vec!["covid", "covid"]);
        assert_eq!(normalize_text("  Naïve\tCAFÉ "), vec!["naïve", "café"]);
    }

    #[test]
    fn normalize_is_idempotent_on_output() {
        let once = normalize_text("Can 5G antennas cause COVID-19? (Reference: 10316077).");
        let again = normalize_text(&once.join(" "));
        assert_eq!(once, again);
    }

    #[test]
    fn splits_on_terminal_punctuation() {
        let s = SentenceSplitter::default();
        assert_eq!(
            s.split("A is true. B follows? C!"),
            vec!["A is true.", "B follows?", "C!"]
        );
    }

    #[test]
    fn abbreviation_does_not_split() {
        let s = SentenceSplitter::new(["mg."]);
        assert_eq!(s.split("Dose is 5 mg. daily."), vec!["Dose is 5 mg. daily."]);
        // capitalized continuation after an abbreviation stays together too
        assert_eq!(
            s.split("Take 5 mg. Daily use is fine."),
            vec!["Take 5 mg. Daily use is fine."]
        );
        let none = SentenceSplitter::new(core::iter::empty::<&str>());
        assert_eq!(none.split("Take 5 mg. Daily use is fine.").len(), 2);
    }

    #[test]
    fn body_without_terminal_punctuation_is_one_sentence() {
        let s = SentenceSplitter::default();
        assert_eq!(
            s.split("  no terminal punctuation here  "),
            vec!["no terminal punctuation here"]
        );
    }

    #[test]
    fn lowercase_or_decimal_continuation_is_not_a_boundary() {
        let s = SentenceSplitter::default();
        assert_eq!(
            s.split("Take 2.5 mg daily. then rest."),
            vec!["Take 2.5 mg daily. then rest."]
        );
        assert_eq!(
            s.split("He said \"stop.\" Then left."),
            vec!["He said \"stop.\"", "Then left."]
        );
    }

    #[test]
    fn list_parsing_skips_comments_and_normalizes() {
        let s = SentenceSplitter::from_list("# comment\nMg\n\net al.\n");
        let got: Vec<&str> = s.abbreviations().collect();
        assert_eq!(got, vec!["al.", "mg."]);
    }

    #[test]
    fn spans_cover_all_non_whitespace() {
        let text = "First one.  Second one!\n\nThird (Reference: 1). tail";
        let s = SentenceSplitter::default();
        let joined: String = s.split(text).concat();
        let expect: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let got: String = joined.chars().filter(|c| !c.is_whitespace()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn strips_tags_and_entities() {
        assert_eq!(
            collapse_whitespace(&strip_tags("<p>Fish &amp; chips</p><br/>ok")),
            "Fish & chips ok"
        );
    }
}
