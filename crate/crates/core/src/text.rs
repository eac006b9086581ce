//! Lightweight text helpers shared by the pipeline: token estimation,
//! name canonicalization and word tokenization.
//!
//! Token counts are an approximation (runs of alphanumerics count as one
//! token, every other non-whitespace character counts as one token). No
//! tokenizer model is loaded.

use std::ops::Range;

/// Byte spans of the approximate tokens of `text`, in order.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(i);
            }
            continue;
        }
        if let Some(s) = run_start.take() {
            spans.push(s..i);
        }
        if !ch.is_whitespace() {
            spans.push(i..i + ch.len_utf8());
        }
    }
    if let Some(s) = run_start {
        spans.push(s..text.len());
    }
    spans
}

/// Approximate token count.
pub fn count_tokens(text: &str) -> usize {
    let mut count = 0;
    let mut in_run = false;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if !in_run {
                count += 1;
                in_run = true;
            }
        } else {
            in_run = false;
            if !ch.is_whitespace() {
                count += 1;
            }
        }
    }
    count
}

/// Trim and collapse internal whitespace runs to a single space.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical entity name: trimmed, whitespace-collapsed, uppercase.
pub fn canonical_name(name: &str) -> String {
    collapse_whitespace(name).to_uppercase()
}

/// Lowercased alphanumeric words, splitting on every non-alphanumeric char.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// Truncate `text` to at most `max_tokens` approximate tokens, cutting at a
/// token boundary.
pub fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let spans = token_spans(text);
    if spans.len() <= max_tokens {
        return text;
    }
    if max_tokens == 0 {
        return "";
    }
    &text[..spans[max_tokens - 1].end]
}
