//! Deterministic offline backend.
//!
//! Fixture lookups come first: a fixture map keyed by the SHA-256 hex digest
//! of the prompt (or by the literal prompt text). Without a fixture the mock
//! recognizes the shipped templates and answers with simple text heuristics:
//!
//! * extraction: capitalized phrases become entities, co-occurrence within a
//!   sentence becomes a relation;
//! * consolidation: descriptions joined with `" | "`;
//! * community summary: `"Summary of: "` followed by the sorted member names,
//!   or the single member's description;
//! * filter: each context sentence scored by question-token overlap;
//! * merge: the highest-ranked report descriptions.
//!
//! Embeddings are hash-seeded random projections of word and character
//! trigram features, so identical text always maps to the identical vector.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{estimate_usage_tokens, Backend, ChatRequest, ChatResponse, GatewayError, ResponseFormat, TokenUsage};
use crate::prompts::{self, PromptKind};
use crate::text;

pub const DEFAULT_MOCK_DIMENSION: usize = 256;

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "has", "have",
    "he", "her", "his", "how", "i", "in", "is", "it", "its", "of", "on", "or", "she", "that", "the",
    "their", "them", "they", "this", "to", "was", "were", "what", "when", "where", "which", "who",
    "whom", "why", "with",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.contains(&word)
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    fixtures: HashMap<String, String>,
    dimension: usize,
    seed: u64,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(DEFAULT_MOCK_DIMENSION, 0)
    }
}

impl MockBackend {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self { fixtures: HashMap::new(), dimension: dimension.max(1), seed }
    }

    /// Adds a fixture. `key` is either a prompt's SHA-256 hex digest or the
    /// literal prompt.
    pub fn with_fixture(mut self, key: impl Into<String>, response: impl Into<String>) -> Self {
        self.fixtures.insert(key.into(), response.into());
        self
    }

    pub fn with_fixtures(mut self, fixtures: HashMap<String, String>) -> Self {
        self.fixtures.extend(fixtures);
        self
    }

    /// Loads a JSON object mapping prompt key to response text.
    pub fn load_fixtures(path: &Path) -> Result<HashMap<String, String>, GatewayError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| GatewayError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn prompt_key(prompt: &str) -> String {
        hex::encode(Sha256::digest(prompt.as_bytes()))
    }

    fn fixture(&self, prompt: &str) -> Option<&String> {
        self.fixtures.get(&Self::prompt_key(prompt)).or_else(|| self.fixtures.get(prompt))
    }

    fn respond(&self, request: &ChatRequest) -> String {
        if let Some(r) = self.fixture(&request.prompt_text) {
            return r.clone();
        }
        let p = &request.prompt_text;
        match prompts::classify(p) {
            PromptKind::Extract => mock_extract(prompts::fenced_section(p, "# Text").unwrap_or("")),
            PromptKind::Consolidate => mock_consolidate(prompts::fenced_section(p, "# Descriptions").unwrap_or("[]")),
            PromptKind::Summarize => mock_summarize(prompts::fenced_section(p, "# Members").unwrap_or("[]")),
            PromptKind::Filter => mock_filter(
                prompts::fenced_section(p, "# User Question").unwrap_or(""),
                prompts::fenced_section(p, prompts::FILTER_HEADING).unwrap_or(""),
            ),
            PromptKind::Merge => mock_merge(prompts::fenced_section(p, prompts::MERGE_HEADING).unwrap_or("")),
            PromptKind::Other => {
                let words: Vec<&str> = p.split_whitespace().take(12).collect();
                let echo = format!("Mock reply: {}", words.join(" "));
                if request.response_format == ResponseFormat::JsonObject {
                    json!({ "response": echo }).to_string()
                } else {
                    echo
                }
            }
        }
    }

    /// Deterministic projection embedding of `text`.
    pub fn embed_text(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dimension];
        for word in text::words(text) {
            let weight = if is_stopword(&word) { 0.1 } else { 1.0 };
            self.add_feature(&mut v, &format!("w:{word}"), weight);
            let padded: Vec<char> = format!("^{word}$").chars().collect();
            for tri in padded.windows(3) {
                let t: String = tri.iter().collect();
                self.add_feature(&mut v, &format!("c:{t}"), 0.25 * weight);
            }
        }
        if v.iter().all(|x| *x == 0.0) {
            // text without alphanumerics still gets a stable vector
            self.add_feature(&mut v, &format!("raw:{text}"), 1.0);
        }
        v
    }

    fn add_feature(&self, v: &mut [f32], feature: &str, weight: f32) {
        let mut state = fnv1a(self.seed, feature.as_bytes());
        for x in v.iter_mut() {
            state = splitmix64(&mut state);
            let unit = (state >> 40) as f32 / (1u64 << 24) as f32;
            *x += weight * (2.0 * unit - 1.0);
        }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Backend for MockBackend {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let text = self.respond(request);
        let usage = TokenUsage {
            prompt_tokens: estimate_usage_tokens(&request.prompt_text),
            completion_tokens: estimate_usage_tokens(&text),
        };
        Ok(ChatResponse { text, usage })
    }

    fn embed(&self, texts: &[String]) -> Result<(Vec<Vec<f32>>, u64), GatewayError> {
        let tokens = texts.iter().map(|t| estimate_usage_tokens(t)).sum();
        Ok((texts.iter().map(|t| self.embed_text(t)).collect(), tokens))
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

/// Splits text into sentences on line breaks and sentence-final punctuation.
pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut current = String::new();
        let chars: Vec<char> = line.chars().collect();
        for (i, ch) in chars.iter().enumerate() {
            current.push(*ch);
            let boundary = matches!(ch, '.' | '!' | '?')
                && chars.get(i + 1).is_none_or(|c| c.is_whitespace());
            if boundary {
                let s = current.trim().to_string();
                if !s.is_empty() {
                    out.push(s);
                }
                current.clear();
            }
        }
        let s = current.trim().to_string();
        if !s.is_empty() {
            out.push(s);
        }
    }
    out
}

/// Distinct non-stopword question words.
pub fn content_words(text: &str) -> BTreeSet<String> {
    text::words(text).into_iter().filter(|w| !is_stopword(w)).collect()
}

/// Mock relevance: `round(100 * |Q ∩ S| / |Q|)` where `Q` is the question's
/// content-word set and `S` the sentence's word set.
pub fn overlap_score(question: &BTreeSet<String>, sentence: &str) -> f64 {
    if question.is_empty() {
        return 0.0;
    }
    let words: BTreeSet<String> = text::words(sentence).into_iter().collect();
    let hits = question.iter().filter(|w| words.contains(*w)).count();
    (100.0 * hits as f64 / question.len() as f64).round()
}

const MAX_MOCK_POINTS: usize = 8;

fn mock_filter(question: &str, context: &str) -> String {
    let q = content_words(question);
    let mut points: Vec<(String, f64)> = Vec::new();
    for s in sentences(context) {
        let score = overlap_score(&q, &s);
        if score > 0.0 && !points.iter().any(|(d, _)| *d == s) {
            points.push((s, score));
        }
    }
    // stable: equal scores keep context order
    points.sort_by(|a, b| b.1.total_cmp(&a.1));
    points.truncate(MAX_MOCK_POINTS);
    let points: Vec<Value> =
        points.into_iter().map(|(d, s)| json!({ "description": d, "score": s })).collect();
    json!({ "points": points }).to_string()
}

fn mock_merge(reports: &str) -> String {
    let descriptions: Vec<&str> = reports
        .lines()
        .filter_map(|l| l.split_once("): ").map(|(_, d)| d.trim()))
        .filter(|d| !d.is_empty())
        .collect();
    match descriptions.as_slice() {
        [] => "No analyst reports were provided. From general knowledge alone the question cannot be answered with confidence.".to_string(),
        [only] => (*only).to_string(),
        [first, second, ..] => format!("{first} Additional context: {second}"),
    }
}

fn mock_consolidate(descriptions: &str) -> String {
    let list: Vec<String> = serde_json::from_str(descriptions).unwrap_or_default();
    list.join(" | ")
}

fn mock_summarize(members: &str) -> String {
    let list: Vec<Value> = serde_json::from_str(members).unwrap_or_default();
    let field = |v: &Value, k: &str| v.get(k).and_then(Value::as_str).unwrap_or("").to_string();
    if list.len() == 1 {
        let d = field(&list[0], "description");
        return if d.trim().is_empty() { field(&list[0], "name") } else { d };
    }
    let mut names: Vec<String> = list.iter().map(|v| field(v, "name")).collect();
    names.sort();
    format!("Summary of: {}", names.join(", "))
}

const NON_ENTITY_CAPITALS: &[&str] = &[
    "A", "An", "And", "As", "At", "But", "By", "For", "From", "He", "Her", "His", "However", "If", "In",
    "It", "Its", "On", "Our", "She", "The", "Their", "There", "These", "They", "This", "Those", "To",
    "We", "When", "While", "With",
];

/// Capitalized word runs in one sentence, in order of appearance.
fn capitalized_phrases(sentence: &str) -> Vec<String> {
    let mut phrases = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for raw in sentence.split_whitespace() {
        let word: String = raw.trim_matches(|c: char| !c.is_alphanumeric()).to_string();
        let ends_phrase = raw.ends_with([',', ';', ':', '.', '!', '?', ')']);
        let capitalized = word.chars().next().is_some_and(|c| c.is_uppercase());
        if capitalized && !(current.is_empty() && NON_ENTITY_CAPITALS.contains(&word.as_str())) {
            current.push(word);
        } else if !current.is_empty() {
            phrases.push(current.join(" "));
            current.clear();
        }
        if ends_phrase && !current.is_empty() {
            phrases.push(current.join(" "));
            current.clear();
        }
    }
    if !current.is_empty() {
        phrases.push(current.join(" "));
    }
    phrases
}

fn mock_extract(chunk: &str) -> String {
    let mut descriptions: BTreeMap<String, (String, Vec<String>)> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut relations: Vec<Value> = Vec::new();
    for sentence in sentences(chunk) {
        let mut seen: Vec<String> = Vec::new();
        for phrase in capitalized_phrases(&sentence) {
            let key = text::canonical_name(&phrase);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key.clone());
            let entry = descriptions.entry(key.clone()).or_insert_with(|| {
                order.push(key.clone());
                (phrase.clone(), Vec::new())
            });
            if !entry.1.contains(&sentence) {
                entry.1.push(sentence.clone());
            }
        }
        for pair in seen.windows(2) {
            relations.push(json!({
                "source": descriptions[&pair[0]].0,
                "target": descriptions[&pair[1]].0,
                "description": sentence,
            }));
        }
    }
    let entities: Vec<Value> = order
        .iter()
        .map(|k| {
            let (name, sents) = &descriptions[k];
            json!({ "name": name, "description": sents.join(" ") })
        })
        .collect();
    json!({ "entities": entities, "relations": relations }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::{dot, EmbeddingVector};

    fn chat(m: &MockBackend, prompt: &str, json: bool) -> String {
        let mut r = ChatRequest::new(prompt).unwrap();
        if json {
            r = r.json();
        }
        m.chat(&r).unwrap().text
    }

    #[test]
    fn fixture_echo() {
        let m = MockBackend::default().with_fixture("ping", "pong");
        assert_eq!(chat(&m, "ping", false), "pong");
        let hashed = MockBackend::default().with_fixture(MockBackend::prompt_key("ping"), "pong2");
        assert_eq!(chat(&hashed, "ping", false), "pong2");
    }

    #[test]
    fn usage_is_ceil_quarter_length() {
        let m = MockBackend::default().with_fixture("ping", "pong!");
        let r = m.chat(&ChatRequest::new("ping").unwrap()).unwrap();
        assert_eq!(r.usage, TokenUsage { prompt_tokens: 1, completion_tokens: 2 });
    }

    #[test]
    fn filter_prompt_scores_overlap() {
        let p = prompts::render(
            prompts::FILTER,
            &[("user_query", "Who founded OpenAI?"), ("context_data", "Sam Altman founded OpenAI.")],
        );
        let out: Value = serde_json::from_str(&chat(&MockBackend::default(), &p, true)).unwrap();
        let points = out["points"].as_array().unwrap();
        assert_eq!(points.len(), 1);
        assert!(points[0]["description"].as_str().unwrap().contains("Sam Altman"));
        // Q = {founded, openai}; both present -> 100
        assert_eq!(points[0]["score"].as_f64().unwrap(), 100.0);
    }

    #[test]
    fn overlap_arithmetic() {
        // Q = {sam, altman, among, backers, startups}; sentence has 4 of 5
        let q = content_words("Was Sam Altman among backers of startups?");
        assert_eq!(q.len(), 5);
        assert_eq!(overlap_score(&q, "Sam Altman is among the backers of an AI startup."), 80.0);
    }

    #[test]
    fn embeddings_deterministic_and_distinct() {
        let m = MockBackend::default();
        let a = EmbeddingVector::new(m.embed_text("abc")).unwrap();
        let b = EmbeddingVector::new(m.embed_text("abc")).unwrap();
        let c = EmbeddingVector::new(m.embed_text("xyz")).unwrap();
        assert_eq!(a, b);
        let cos = dot(a.values(), c.values());
        assert!(cos < 1.0 - 1e-3, "cos {cos}");
    }

    #[test]
    fn extraction_heuristic() {
        let out: Value = serde_json::from_str(&mock_extract(
            "OpenAI is a tech company founded by Sam Altman. The board met in San Francisco.",
        ))
        .unwrap();
        let names: Vec<&str> =
            out["entities"].as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
        assert_eq!(names, vec!["OpenAI", "Sam Altman", "San Francisco"]);
        assert_eq!(out["relations"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn summary_rules() {
        let many = json!([
            {"name": "SAM ALTMAN", "description": "x"},
            {"name": "MICROSOFT", "description": "y"},
            {"name": "OPENAI", "description": "z"},
        ]);
        assert_eq!(mock_summarize(&many.to_string()), "Summary of: MICROSOFT, OPENAI, SAM ALTMAN");
        let one = json!([{"name": "OPENAI", "description": "A lab."}]);
        assert_eq!(mock_summarize(&one.to_string()), "A lab.");
    }

    #[test]
    fn sentence_split() {
        assert_eq!(sentences("A b. C d?\nE"), vec!["A b.", "C d?", "E"]);
        assert_eq!(sentences("v1.2 is out"), vec!["v1.2 is out"]);
    }
}
