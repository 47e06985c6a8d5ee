//! The generated reference text ("GenText").
//!
//! A prompt lists the evidence passages with their `(Reference: <id>)`
//! markers; the generated paragraph is split into sentences whose markers
//! are checked against the passages that were actually in the prompt.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::evidence::{passage_order, ScoredPassage};
use crate::providers::{embed_checked, EmbeddingProvider, GenerationProvider};
use crate::text::{collapse_whitespace, word_count, SentenceSplitter};

pub const REFERENCE_LABEL: &str = "Reference";

/// Default generation prompt. Placeholders: `{query}`, `{context}`,
/// `{word_limit}`.
pub const DEFAULT_PROMPT_TEMPLATE: &str = "Query: {query}\n\
\n\
Context: {context}\n\
\n\
Write a paragraph answering the query based on the context provided above constituted by ONLY {word_limit} words, with references for each sentence with (Reference:...).\n\
\n\
Do not use extra knowledge.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }
}

impl PromptTemplate {
    /// Accepts a template containing each placeholder exactly once. The
    /// instruction block is whatever follows `{context}`.
    pub fn parse(text: &str) -> Result<Self> {
        for placeholder in ["{query}", "{context}", "{word_limit}"] {
            if text.matches(placeholder).count() != 1 {
                return Err(Error::InvalidInput(alloc::format!(
                    "prompt template needs exactly one {placeholder}"
                )));
            }
        }
        Ok(Self {
            text: text.trim_end_matches(['\n', '\r']).to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    fn render(&self, query: &str, context: &str, word_limit: usize) -> String {
        self.text
            .replace("{word_limit}", &word_limit.to_string())
            .replace("{query}", query)
            .replace("{context}", context)
    }

    fn instructions(&self, word_limit: usize) -> String {
        let tail = self.text.split("{context}").nth(1).unwrap_or_default();
        tail.replace("{word_limit}", &word_limit.to_string()).trim().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub query_text: String,
    pub context_block: String,
    pub instruction_block: String,
    pub word_limit: usize,
    /// The full rendered prompt sent to the generator.
    pub text: String,
}

/// Renders the prompt for `query` over `context`, listing passages by
/// descending sigma, each followed by its reference marker.
pub fn build_prompt(
    query_text: &str,
    context: &[ScoredPassage],
    word_limit: usize,
    template: &PromptTemplate,
) -> Result<Prompt> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let mut ordered: Vec<&ScoredPassage> = context.iter().collect();
    ordered.sort_by(|a, b| passage_order(a, b));
    let mut context_block = String::new();
    for p in ordered {
        if !context_block.is_empty() {
            context_block.push(' ');
        }
        context_block.push_str(&alloc::format!(
            "{} ({REFERENCE_LABEL}: {})",
            p.passage.sentence,
            p.passage.ref_id
        ));
    }
    let query_text = collapse_whitespace(query_text);
    Ok(Prompt {
        text: template.render(&query_text, &context_block, word_limit),
        instruction_block: template.instructions(word_limit),
        query_text,
        context_block,
        word_limit,
    })
}

/// A `(Reference: ...)` marker and the ids it cites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationMarker {
    pub range: Range<usize>,
    pub ids: Vec<String>,
}

/// Finds every citation marker. Accepted forms: `(Reference: 1)`,
/// `(References: 1, 2)`, `(Reference: 1; 2)`, `(reference: 1 and 2)`.
pub fn citation_markers(text: &str) -> Vec<CitationMarker> {
    let mut markers = Vec::new();
    let mut from = 0;
    while let Some(offset) = text[from..].find('(') {
        let open = from + offset;
        from = open + 1;
        let after = text[open + 1..].trim_start();
        let label_len = REFERENCE_LABEL.len();
        if after.len() < label_len || !after[..label_len].eq_ignore_ascii_case(REFERENCE_LABEL) {
            continue;
        }
        let mut rest = &after[label_len..];
        if rest.starts_with(['s', 'S']) {
            rest = &rest[1..];
        }
        let rest_trimmed = rest.trim_start();
        let Some(body) = rest_trimmed.strip_prefix(':') else {
            continue;
        };
        let Some(close) = body.find(')') else {
            continue;
        };
        let inner = &body[..close];
        if inner.contains('(') {
            continue;
        }
        let body_start = text.len() - body.len();
        let end = body_start + close + 1;
        let ids: Vec<String> = inner
            .split([',', ';'])
            .flat_map(|part| part.split(" and "))
            .map(str::trim)
            .filter(|id| !id.is_empty() && *id != "...")
            .map(ToString::to_string)
            .collect();
        if !ids.is_empty() {
            markers.push(CitationMarker { range: open..end, ids });
        }
        from = end;
    }
    markers
}

/// Text with all citation markers removed and spacing before punctuation
/// repaired.
pub fn strip_markers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for m in citation_markers(text) {
        out.push_str(&text[cursor..m.range.start]);
        cursor = m.range.end;
    }
    out.push_str(&text[cursor..]);
    let collapsed = collapse_whitespace(&out);
    let mut fixed = String::with_capacity(collapsed.len());
    let mut chars = collapsed.chars().peekable();
    while let Some(c) = chars.next() {
        if c == ' ' && matches!(chars.peek(), Some('.' | ',' | ';' | '!' | '?' | ':')) {
            continue;
        }
        fixed.push(c);
    }
    fixed
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Generated,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedSentence {
    /// Display text with markers stripped.
    pub text: String,
    pub citations: BTreeSet<String>,
    /// Cites at least one id, and only ids present in the prompt context.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenText {
    pub sentences: Vec<CitedSentence>,
    /// The generator output exactly as received (or the fallback text).
    pub raw: String,
    /// Words of the marker-stripped text.
    pub word_count: usize,
    pub origin: Origin,
    /// Set when the text runs past 1.5 times the requested word limit.
    #[serde(default)]
    pub overlong: bool,
    /// Unit-norm embedding of the valid sentences; empty until embedded.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<f64>,
}

impl GenText {
    pub fn valid_sentences(&self) -> impl Iterator<Item = &CitedSentence> {
        self.sentences.iter().filter(|s| s.valid)
    }

    /// Valid sentences joined by spaces: the text documents are compared to.
    pub fn factual_text(&self) -> String {
        let parts: Vec<&str> = self.valid_sentences().map(|s| s.text.as_str()).collect();
        parts.join(" ")
    }

    /// Every distinct id cited anywhere, sorted.
    pub fn references(&self) -> BTreeSet<String> {
        self.sentences
            .iter()
            .flat_map(|s| s.citations.iter().cloned())
            .collect()
    }

    /// Marks the text overlong when it exceeds 1.5 × `word_limit` words.
    pub fn flag_length(&mut self, word_limit: usize) {
        self.overlong = self.word_count as f64 > 1.5 * word_limit as f64;
    }

    /// Embeds [`GenText::factual_text`].
    pub fn embed(&mut self, provider: &dyn EmbeddingProvider) -> Result<(), ProviderError> {
        let text = self.factual_text();
        let mut vectors = embed_checked(provider, &[text.as_str()])?;
        self.embedding = vectors.pop().ok_or_else(|| ProviderError::new("embed", "no vector"))?;
        Ok(())
    }
}

/// Ids of the passages in a prompt context.
pub fn context_references(context: &[ScoredPassage]) -> BTreeSet<String> {
    context.iter().map(|p| p.passage.ref_id.clone()).collect()
}

/// Sentence spans of generated text. Besides the ordinary terminal
/// punctuation rule, a citation marker (with any trailing `.!?`) followed by
/// whitespace closes a sentence, and a span holding nothing but markers is
/// attached to the sentence before it.
fn gentext_spans(raw: &str) -> Vec<Range<usize>> {
    let splitter = SentenceSplitter::default();
    let markers = citation_markers(raw);
    let mut pieces: Vec<Range<usize>> = Vec::new();
    for span in splitter.spans(raw) {
        let mut start = span.start;
        for m in markers
            .iter()
            .filter(|m| m.range.start >= span.start && m.range.end < span.end)
        {
            let mut cut = m.range.end;
            while raw[cut..span.end].starts_with(['.', '!', '?']) {
                cut += 1;
            }
            if cut < span.end && raw[cut..].starts_with(char::is_whitespace) && cut > start {
                pieces.push(start..cut);
                start = cut;
            }
        }
        pieces.push(start..span.end);
    }

    let mut merged: Vec<Range<usize>> = Vec::new();
    let mut pending_start: Option<usize> = None;
    for piece in pieces {
        let content = strip_markers(&raw[piece.clone()]);
        let marker_only = content.chars().all(|c| !c.is_alphanumeric());
        if marker_only {
            match merged.last_mut() {
                Some(prev) => prev.end = piece.end,
                None => {
                    pending_start.get_or_insert(piece.start);
                }
            }
        } else {
            let start = pending_start.take().unwrap_or(piece.start);
            merged.push(start..piece.end);
        }
    }
    if let (Some(start), true) = (pending_start, merged.is_empty()) {
        merged.push(start..raw.trim_end().len());
    }
    merged
        .into_iter()
        .map(|r| {
            let s = &raw[r.clone()];
            let lead = s.len() - s.trim_start().len();
            r.start + lead..r.start + s.trim_end().len()
        })
        .collect()
}

/// Splits generated text into cited sentences and validates each citation
/// against `context_refs`. Fails with [`Error::NoValidSentences`] when no
/// sentence is validly cited.
pub fn parse_gentext(raw: &str, context_refs: &BTreeSet<String>) -> Result<GenText> {
    let mut sentences = Vec::new();
    for span in gentext_spans(raw) {
        let piece = &raw[span];
        let citations: BTreeSet<String> = citation_markers(piece).into_iter().flat_map(|m| m.ids).collect();
        let text = strip_markers(piece);
        if text.is_empty() && citations.is_empty() {
            continue;
        }
        let valid = !citations.is_empty() && citations.is_subset(context_refs);
        sentences.push(CitedSentence { text, citations, valid });
    }
    if !sentences.iter().any(|s| s.valid) {
        return Err(Error::NoValidSentences);
    }
    let word_count = sentences.iter().map(|s| word_count(&s.text)).sum();
    Ok(GenText {
        sentences,
        raw: raw.to_string(),
        word_count,
        origin: Origin::Generated,
        overlong: false,
        embedding: Vec::new(),
    })
}

/// Calls the generator up to `retries + 1` times until its output parses
/// with at least one valid sentence. Transport failures propagate at once.
pub fn generate(
    prompt: &Prompt,
    generator: &dyn GenerationProvider,
    retries: usize,
    context_refs: &BTreeSet<String>,
) -> Result<String> {
    let attempts = retries + 1;
    for _ in 0..attempts {
        let raw = generator.generate(&prompt.text)?;
        if parse_gentext(&raw, context_refs).is_ok() {
            return Ok(raw);
        }
    }
    Err(Error::GenerationFailed { attempts })
}

/// Extractive stand-in used when generation fails: the best passages, each
/// with its citation, while the total stays within `limit` words (always at
/// least one passage).
pub fn fallback_gentext(context: &[ScoredPassage], limit: usize) -> Result<GenText> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let mut ordered: Vec<&ScoredPassage> = context.iter().collect();
    ordered.sort_by(|a, b| passage_order(a, b));
    let mut sentences = Vec::new();
    let mut raw = String::new();
    let mut words = 0;
    for p in ordered {
        let n = word_count(&p.passage.sentence);
        if !sentences.is_empty() && words + n > limit {
            break;
        }
        words += n;
        if !raw.is_empty() {
            raw.push(' ');
        }
        raw.push_str(&alloc::format!(
            "{} ({REFERENCE_LABEL}: {})",
            p.passage.sentence,
            p.passage.ref_id
        ));
        let mut citations = BTreeSet::new();
        citations.insert(p.passage.ref_id.clone());
        sentences.push(CitedSentence {
            text: p.passage.sentence.clone(),
            citations,
            valid: true,
        });
    }
    Ok(GenText {
        sentences,
        raw,
        word_count: words,
        origin: Origin::Fallback,
        overlong: false,
        embedding: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::Passage;
    use alloc::vec;

    pub(crate) const PAPER_EXAMPLE: &str = "Based on the context provided, there is a misconception linking 5G antennas to the COVID-19 pandemic (Reference: 10316077). However, this connection has no statistically significant evidence to support it (Reference: 10316077). Instead, it's important to note that 5G networks play a crucial role in ensuring secure data handling and enhancing user privacy (Reference: 10255561). Moreover, SARS-CoV-2 variants remain the main cause of COVID-19 outbreaks (Reference: 10288941).";

    fn sp(ref_id: &str, ordinal: usize, sentence: &str, sigma: f64) -> ScoredPassage {
        ScoredPassage {
            passage: Passage {
                ref_id: ref_id.into(),
                sentence: sentence.into(),
                ordinal,
                embedding: Vec::new(),
            },
            sim: sigma,
            discounted: false,
            sigma,
        }
    }

    fn refs(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_the_worked_example() {
        let g = parse_gentext(PAPER_EXAMPLE, &refs(&["10316077", "10255561", "10288941"])).unwrap();
        assert_eq!(g.sentences.len(), 4);
        let multiset: Vec<&str> = g
            .sentences
            .iter()
            .flat_map(|s| s.citations.iter().map(String::as_str))
            .collect();
        assert_eq!(multiset, vec!["10316077", "10316077", "10255561", "10288941"]);
        assert_eq!(g.references(), refs(&["10316077", "10255561", "10288941"]));
        assert!(g.sentences.iter().all(|s| s.valid));
        assert_eq!(g.raw, PAPER_EXAMPLE);
        assert_eq!(
            g.sentences[3].text,
            "Moreover, SARS-CoV-2 variants remain the main cause of COVID-19 outbreaks."
        );
        assert_eq!(g.word_count, word_count(&strip_markers(PAPER_EXAMPLE)));
    }

    #[test]
    fn unknown_citation_is_invalid_and_no_markers_fails() {
        let g = parse_gentext("A holds (Reference: 1). B holds (Reference: 9).", &refs(&["1"])).unwrap();
        assert!(g.sentences[0].valid);
        assert!(!g.sentences[1].valid);
        assert_eq!(g.factual_text(), "A holds.");
        assert_eq!(
            parse_gentext("No markers at all here.", &refs(&["1"])).unwrap_err(),
            Error::NoValidSentences
        );
        assert_eq!(parse_gentext("", &refs(&["1"])).unwrap_err(), Error::NoValidSentences);
    }

    #[test]
    fn marker_forms() {
        let m = citation_markers("x (Reference: 1, 2) y (references: 3; 4) z (REFERENCE : 5 and 6) (Reference:...)");
        let ids: Vec<Vec<String>> = m.into_iter().map(|m| m.ids).collect();
        assert_eq!(
            ids,
            vec![
                vec!["1".to_string(), "2".into()],
                vec!["3".into(), "4".into()],
                vec!["5".into(), "6".into()]
            ]
        );
        assert!(citation_markers("(see Reference 3) (Ref: 2)").is_empty());
    }

    #[test]
    fn marker_after_period_closes_sentence() {
        // the marker trails the period, and the next sentence starts lowercase
        let raw = "Interference hurts 5G. (Reference: 1)   these measures help (Reference: 2).";
        let g = parse_gentext(raw, &refs(&["1", "2"])).unwrap();
        assert_eq!(g.sentences.len(), 2);
        assert_eq!(g.sentences[0].text, "Interference hurts 5G.");
        assert_eq!(g.sentences[0].citations, refs(&["1"]));
        assert_eq!(g.sentences[1].text, "these measures help.");
    }

    #[test]
    fn prompt_lists_passages_by_sigma_with_markers() {
        let ctx = vec![sp("b", 0, "Second.", 0.5), sp("a", 3, "First.", 0.9)];
        let p = build_prompt("can 5g antennas cause covid 19", &ctx, 64, &PromptTemplate::default()).unwrap();
        assert_eq!(p.context_block, "First. (Reference: a) Second. (Reference: b)");
        assert!(p.instruction_block.contains("ONLY 64 words"));
        assert!(p.instruction_block.contains("Do not use extra knowledge."));
        assert!(p
            .text
            .starts_with("Query: can 5g antennas cause covid 19\n\nContext: First."));
        let single = build_prompt("q", &ctx[..1], 64, &PromptTemplate::default()).unwrap();
        assert_eq!(single.context_block.matches("(Reference:").count(), 1);
        assert_eq!(
            build_prompt("q", &[], 64, &PromptTemplate::default()).unwrap_err(),
            Error::EmptyContext
        );
        assert_eq!(
            p,
            build_prompt("can 5g antennas cause covid 19", &ctx, 64, &PromptTemplate::default()).unwrap()
        );
    }

    #[test]
    fn template_placeholders_are_required() {
        assert!(PromptTemplate::parse("Query: {query}").is_err());
        let t = PromptTemplate::parse("Q {query}\nC {context}\nN {word_limit}\n").unwrap();
        let p = build_prompt("q", &[sp("1", 0, "x", 1.0)], 12, &t).unwrap();
        assert_eq!(p.text, "Q q\nC x (Reference: 1)\nN 12");
        assert_eq!(p.instruction_block, "N 12");
    }

    #[test]
    fn fallback_greedy_cutoff() {
        let thirty = "w ".repeat(30);
        let ctx = vec![
            sp("1", 0, thirty.trim(), 0.9),
            sp("2", 0, thirty.trim(), 0.8),
            sp("3", 0, thirty.trim(), 0.7),
        ];
        let g = fallback_gentext(&ctx, 64).unwrap();
        assert_eq!(g.sentences.len(), 2);
        assert_eq!(g.word_count, 60);
        assert_eq!(g.origin, Origin::Fallback);
        assert_eq!(g, fallback_gentext(&ctx, 64).unwrap());

        let hundred = "w ".repeat(100);
        let g = fallback_gentext(&[sp("1", 0, hundred.trim(), 0.9)], 64).unwrap();
        assert_eq!(g.sentences.len(), 1);
        assert_eq!(fallback_gentext(&[], 64).unwrap_err(), Error::EmptyContext);
    }

    struct Scripted {
        outputs: Vec<&'static str>,
        next: core::sync::atomic::AtomicUsize,
    }

    impl Scripted {
        fn new(outputs: Vec<&'static str>) -> Self {
            Self {
                outputs,
                next: core::sync::atomic::AtomicUsize::new(0),
            }
        }
    }

    impl GenerationProvider for Scripted {
        fn generate(&self, _: &str) -> Result<String, ProviderError> {
            let i = self.next.fetch_add(1, core::sync::atomic::Ordering::SeqCst);
            Ok(self.outputs[i].to_string())
        }
        fn fingerprint(&self) -> String {
            "scripted".into()
        }
    }

    #[test]
    fn generate_retries_then_fails() {
        let prompt = build_prompt("q", &[sp("1", 0, "x", 1.0)], 64, &PromptTemplate::default()).unwrap();
        let ids = refs(&["1"]);
        let empty_twice = Scripted::new(vec!["", ""]);
        assert_eq!(
            generate(&prompt, &empty_twice, 1, &ids).unwrap_err(),
            Error::GenerationFailed { attempts: 2 }
        );
        let second_ok = Scripted::new(vec!["junk", "Fine (Reference: 1)."]);
        assert_eq!(generate(&prompt, &second_ok, 1, &ids).unwrap(), "Fine (Reference: 1).");
    }

    #[test]
    fn length_flag() {
        let mut g = parse_gentext(PAPER_EXAMPLE, &refs(&["10316077", "10255561", "10288941"])).unwrap();
        g.flag_length(64);
        assert!(!g.overlong);
        g.flag_length(20);
        assert!(g.overlong);
    }
}
