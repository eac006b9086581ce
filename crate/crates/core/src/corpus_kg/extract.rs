use std::collections::BTreeSet;

use serde_json::Value;

use super::Chunk;
use crate::llm_gateway::{strip_code_fence, ChatRequest, Gateway, GatewayError};
use crate::prompts;
use crate::text::{canonical_name, collapse_whitespace};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    /// Canonical name.
    pub name: String,
    pub description: String,
    pub source_chunks: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRelation {
    pub head: String,
    pub tail: String,
    pub description: String,
    pub source_chunks: BTreeSet<u64>,
}

/// Entities and relations of one chunk (or a whole graph in subgraph form).
/// Relation endpoints always name an entity in `entities`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subgraph {
    pub entities: Vec<RawEntity>,
    pub relations: Vec<RawRelation>,
}

impl Subgraph {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    fn entity_mut(&mut self, name: &str) -> Option<&mut RawEntity> {
        self.entities.iter_mut().find(|e| e.name == name)
    }
}

fn str_field<'a>(v: &'a Value, keys: &[&str]) -> &'a str {
    keys.iter().find_map(|k| v.get(*k).and_then(Value::as_str)).unwrap_or("")
}

/// Parses an extraction response into a closed subgraph: names are
/// canonicalized, duplicate names within the chunk are merged, self-loops are
/// dropped, and relation endpoints missing from the entity list are added as
/// stub entities with an empty description.
pub fn parse_extraction(text: &str, chunk_id: u64) -> Result<Subgraph, GatewayError> {
    let v: Value = serde_json::from_str(strip_code_fence(text))
        .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| GatewayError::MalformedResponse("extraction is not a JSON object".into()))?;
    let chunks: BTreeSet<u64> = [chunk_id].into();
    let mut sg = Subgraph::default();

    let list = |key: &str| -> Result<Vec<Value>, GatewayError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(Vec::new()),
            Some(Value::Array(a)) => Ok(a.clone()),
            Some(_) => Err(GatewayError::MalformedResponse(format!("\"{key}\" is not a list"))),
        }
    };

    for e in list("entities")? {
        let name = canonical_name(str_field(&e, &["name", "entity_name", "entity"]));
        if name.is_empty() {
            continue;
        }
        let description = collapse_whitespace(str_field(&e, &["description", "entity_description"]));
        match sg.entity_mut(&name) {
            Some(existing) => {
                if !description.is_empty() && !existing.description.contains(&description) {
                    if !existing.description.is_empty() {
                        existing.description.push(' ');
                    }
                    existing.description.push_str(&description);
                }
            }
            None => sg.entities.push(RawEntity { name, description, source_chunks: chunks.clone() }),
        }
    }

    for r in list("relations")? {
        let head = canonical_name(str_field(&r, &["source", "head", "src_id"]));
        let tail = canonical_name(str_field(&r, &["target", "tail", "tgt_id"]));
        if head.is_empty() || tail.is_empty() || head == tail {
            continue;
        }
        for endpoint in [&head, &tail] {
            if sg.entity_mut(endpoint).is_none() {
                sg.entities.push(RawEntity {
                    name: endpoint.clone(),
                    description: String::new(),
                    source_chunks: chunks.clone(),
                });
            }
        }
        let description = collapse_whitespace(str_field(&r, &["description", "relation", "relationship"]));
        sg.relations.push(RawRelation { head, tail, description, source_chunks: chunks.clone() });
    }
    Ok(sg)
}

/// Extracts the subgraph of one chunk.
pub fn extract_subgraph(gateway: &Gateway, chunk: &Chunk) -> Result<Subgraph, GatewayError> {
    let prompt = prompts::render(prompts::EXTRACT, &[("input_text", &chunk.text)]);
    let request = ChatRequest::new(prompt)?.json();
    let response = gateway.chat(&request)?;
    parse_extraction(&response.text, chunk.chunk_id)
}

/// Extracts every chunk concurrently. Chunks whose extraction fails are
/// skipped and logged; the second value counts them.
pub fn extract_all(gateway: &Gateway, chunks: &[Chunk]) -> (Vec<Subgraph>, usize) {
    let results = gateway.fan_out(chunks, |c| extract_subgraph(gateway, c));
    let mut skipped = 0;
    let mut out = Vec::with_capacity(results.len());
    for (chunk, r) in chunks.iter().zip(results) {
        match r {
            Ok(sg) => out.push(sg),
            Err(e) => {
                skipped += 1;
                log::warn!("chunk {} skipped: {e}", chunk.chunk_id);
            }
        }
    }
    (out, skipped)
}
