use std::collections::{BTreeSet, HashMap};

use super::{Entity, KgError, KnowledgeGraph, Relation, Subgraph};
use crate::llm_gateway::{ChatRequest, Gateway};
use crate::prompts;
use crate::text::collapse_whitespace;

struct PendingEntity {
    name: String,
    descriptions: Vec<String>,
    source_chunks: BTreeSet<u64>,
}

/// Merges chunk subgraphs into one graph.
///
/// Entities sharing a canonical name become one entity; ids follow order of
/// first appearance. An entity with several distinct descriptions gets one
/// consolidated description from the gateway, falling back to the
/// descriptions joined with `" | "` if the call fails. Relations are
/// deduplicated on `(head, tail, canonical description)`.
pub fn merge_subgraphs(gateway: &Gateway, subgraphs: &[Subgraph]) -> Result<KnowledgeGraph, KgError> {
    if subgraphs.iter().all(Subgraph::is_empty) {
        return Err(KgError::EmptyGraph);
    }
    let mut pending: Vec<PendingEntity> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    for sg in subgraphs {
        for e in &sg.entities {
            let idx = *by_name.entry(e.name.clone()).or_insert_with(|| {
                pending.push(PendingEntity {
                    name: e.name.clone(),
                    descriptions: Vec::new(),
                    source_chunks: BTreeSet::new(),
                });
                pending.len() - 1
            });
            let p = &mut pending[idx];
            let d = e.description.trim();
            if !d.is_empty() && !p.descriptions.iter().any(|x| x == d) {
                p.descriptions.push(d.to_string());
            }
            p.source_chunks.extend(e.source_chunks.iter().copied());
        }
    }

    let descriptions = gateway.fan_out(&pending, |p| consolidate(gateway, p));
    let entities: Vec<Entity> = pending
        .into_iter()
        .zip(descriptions)
        .enumerate()
        .map(|(i, (p, description))| Entity {
            entity_id: i as u64,
            name: p.name,
            description,
            source_chunks: p.source_chunks,
            embedding: None,
        })
        .collect();

    let mut relations: Vec<Relation> = Vec::new();
    let mut by_key: HashMap<(u64, u64, String), usize> = HashMap::new();
    for sg in subgraphs {
        for r in &sg.relations {
            let (Some(&h), Some(&t)) = (by_name.get(&r.head), by_name.get(&r.tail)) else {
                return Err(KgError::Invariant(format!("relation {} -> {} has unknown endpoint", r.head, r.tail)));
            };
            let h = h as u64;
            let t = t as u64;
            let key = (h, t, collapse_whitespace(&r.description).to_lowercase());
            match by_key.get(&key) {
                Some(&i) => relations[i].source_chunks.extend(r.source_chunks.iter().copied()),
                None => {
                    by_key.insert(key, relations.len());
                    relations.push(Relation {
                        relation_id: relations.len() as u64,
                        head: h,
                        tail: t,
                        description: collapse_whitespace(&r.description),
                        source_chunks: r.source_chunks.clone(),
                    });
                }
            }
        }
    }
    KnowledgeGraph::new(entities, relations)
}

fn consolidate(gateway: &Gateway, p: &PendingEntity) -> String {
    match p.descriptions.len() {
        0 => String::new(),
        1 => p.descriptions[0].clone(),
        _ => {
            let fallback = p.descriptions.join(" | ");
            let list = serde_json::to_string(&p.descriptions).unwrap_or_default();
            let prompt = prompts::render(
                prompts::CONSOLIDATE,
                &[("entity_name", &p.name), ("descriptions", &list)],
            );
            let result = ChatRequest::new(prompt).and_then(|req| gateway.chat(&req));
            match result {
                Ok(resp) => collapse_whitespace(&resp.text),
                Err(e) => {
                    log::warn!("consolidation of {} failed, concatenating: {e}", p.name);
                    fallback
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus_kg::{RawEntity, RawRelation};
    use crate::llm_gateway::MockBackend;

    fn ent(name: &str, d: &str, chunk: u64) -> RawEntity {
        RawEntity { name: name.into(), description: d.into(), source_chunks: [chunk].into() }
    }

    fn rel(h: &str, t: &str, d: &str, chunk: u64) -> RawRelation {
        RawRelation { head: h.into(), tail: t.into(), description: d.into(), source_chunks: [chunk].into() }
    }

    fn gw() -> Gateway {
        Gateway::mock(MockBackend::default())
    }

    #[test]
    fn consolidates_descriptions() {
        let a = Subgraph { entities: vec![ent("OPENAI", "d1", 0)], relations: vec![] };
        let b = Subgraph { entities: vec![ent("OPENAI", "d2", 1)], relations: vec![] };
        let kg = merge_subgraphs(&gw(), &[a, b]).unwrap();
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.entities[0].description, "d1 | d2");
        assert_eq!(kg.entities[0].source_chunks, [0, 1].into());
    }

    #[test]
    fn disjoint_union() {
        let a = Subgraph { entities: vec![ent("A", "x", 0), ent("B", "y", 0)], relations: vec![rel("A", "B", "r", 0)] };
        let b = Subgraph { entities: vec![ent("C", "z", 1)], relations: vec![] };
        let kg = merge_subgraphs(&gw(), &[a, b]).unwrap();
        assert_eq!(kg.len(), 3);
        assert_eq!(kg.neighbors(0), &[1]);
    }

    #[test]
    fn duplicate_relation_deduplicated() {
        let sg = |c| Subgraph {
            entities: vec![ent("A", "x", c), ent("B", "y", c)],
            relations: vec![rel("A", "B", "Works  with", c)],
        };
        let kg = merge_subgraphs(&gw(), &[sg(0), sg(1)]).unwrap();
        assert_eq!(kg.relations.len(), 1);
        assert_eq!(kg.relations[0].source_chunks, [0, 1].into());
    }

    #[test]
    fn merge_is_idempotent() {
        let a = Subgraph {
            entities: vec![ent("A", "x", 0), ent("B", "y", 0)],
            relations: vec![rel("A", "B", "r", 0), rel("B", "A", "s", 0)],
        };
        let b = Subgraph { entities: vec![ent("A", "w", 1), ent("C", "", 1)], relations: vec![rel("C", "A", "t", 1)] };
        let kg = merge_subgraphs(&gw(), &[a, b]).unwrap();
        let sg = kg.to_subgraph();
        let again = merge_subgraphs(&gw(), &[sg.clone(), sg]).unwrap();
        assert_eq!(again, kg);
    }

    #[test]
    fn failed_consolidation_falls_back() {
        struct Down;
        impl crate::llm_gateway::Backend for Down {
            fn chat(&self, _: &ChatRequest) -> Result<crate::llm_gateway::ChatResponse, crate::llm_gateway::GatewayError> {
                Err(crate::llm_gateway::GatewayError::Network("down".into()))
            }
            fn embed(&self, _: &[String]) -> Result<(Vec<Vec<f32>>, u64), crate::llm_gateway::GatewayError> {
                Err(crate::llm_gateway::GatewayError::Network("down".into()))
            }
            fn name(&self) -> &'static str {
                "down"
            }
        }
        let g = Gateway::new(
            Box::new(Down),
            crate::llm_gateway::GatewayConfig { backoff_base: std::time::Duration::ZERO, ..Default::default() },
        );
        let a = Subgraph { entities: vec![ent("A", "one", 0)], relations: vec![] };
        let b = Subgraph { entities: vec![ent("A", "two", 1)], relations: vec![] };
        let kg = merge_subgraphs(&g, &[a, b]).unwrap();
        assert_eq!(kg.entities[0].description, "one | two");
    }

    #[test]
    fn all_empty_is_error() {
        assert!(matches!(merge_subgraphs(&gw(), &[Subgraph::default()]), Err(KgError::EmptyGraph)));
    }
}
