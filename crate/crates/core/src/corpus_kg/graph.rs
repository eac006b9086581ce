use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KgError, RawEntity, RawRelation, Subgraph};
use crate::llm_gateway::{EmbeddingVector, Gateway};
use crate::storage;

pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const RELATIONS_FILE: &str = "relations.jsonl";
pub const ENTITY_VECTORS_FILE: &str = "entity_vectors.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub entity_id: u64,
    pub name: String,
    pub description: String,
    pub source_chunks: BTreeSet<u64>,
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector>,
}

impl Entity {
    /// Text that represents the entity for embedding and context rendering.
    pub fn text(&self) -> String {
        if self.description.is_empty() {
            self.name.clone()
        } else {
            format!("{}: {}", self.name, self.description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub relation_id: u64,
    pub head: u64,
    pub tail: u64,
    pub description: String,
    pub source_chunks: BTreeSet<u64>,
}

/// Entities indexed by `entity_id` (ids are dense, `0..n`) and relations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    pub entities: Vec<Entity>,
    pub relations: Vec<Relation>,
    adjacency: Vec<Vec<u64>>,
}

impl KnowledgeGraph {
    pub fn new(entities: Vec<Entity>, relations: Vec<Relation>) -> Result<Self, KgError> {
        let mut kg = Self { entities, relations, adjacency: Vec::new() };
        kg.rebuild_adjacency();
        kg.validate()?;
        Ok(kg)
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); self.entities.len()];
        let n = adj.len() as u64;
        for r in self.relations.iter().filter(|r| r.head < n && r.tail < n) {
            adj[r.head as usize].insert(r.tail);
            adj[r.tail as usize].insert(r.head);
        }
        self.adjacency = adj.into_iter().map(|s| s.into_iter().collect()).collect();
    }

    pub fn validate(&self) -> Result<(), KgError> {
        let mut names = BTreeSet::new();
        for (i, e) in self.entities.iter().enumerate() {
            if e.entity_id != i as u64 {
                return Err(KgError::Invariant(format!("entity at row {i} has id {}", e.entity_id)));
            }
            if e.name.is_empty() || !names.insert(e.name.as_str()) {
                return Err(KgError::Invariant(format!("empty or duplicate name {:?}", e.name)));
            }
            if e.source_chunks.is_empty() {
                return Err(KgError::Invariant(format!("entity {} has no source chunk", e.name)));
            }
        }
        let n = self.entities.len() as u64;
        let mut triples = BTreeSet::new();
        for r in &self.relations {
            if r.head >= n || r.tail >= n || r.head == r.tail {
                return Err(KgError::Invariant(format!("relation {} has bad endpoints", r.relation_id)));
            }
            if !triples.insert((r.head, r.tail, r.description.as_str())) {
                return Err(KgError::Invariant(format!("duplicate relation {}", r.relation_id)));
            }
            if r.source_chunks.is_empty() {
                return Err(KgError::Invariant(format!("relation {} has no source chunk", r.relation_id)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn neighbors(&self, entity_id: u64) -> &[u64] {
        self.adjacency.get(entity_id as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entity_by_name(&self, name: &str) -> Option<&Entity> {
        let canonical = crate::text::canonical_name(name);
        self.entities.iter().find(|e| e.name == canonical)
    }

    /// Undirected edges `(u, v)` with `u < v`, deduplicated.
    pub fn undirected_edges(&self) -> Vec<(u64, u64)> {
        let set: BTreeSet<(u64, u64)> = self
            .relations
            .iter()
            .map(|r| (r.head.min(r.tail), r.head.max(r.tail)))
            .collect();
        set.into_iter().collect()
    }

    /// The graph as a subgraph, for re-merging.
    pub fn to_subgraph(&self) -> Subgraph {
        let name = |id: u64| self.entities[id as usize].name.clone();
        Subgraph {
            entities: self
                .entities
                .iter()
                .map(|e| RawEntity {
                    name: e.name.clone(),
                    description: e.description.clone(),
                    source_chunks: e.source_chunks.clone(),
                })
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|r| RawRelation {
                    head: name(r.head),
                    tail: name(r.tail),
                    description: r.description.clone(),
                    source_chunks: r.source_chunks.clone(),
                })
                .collect(),
        }
    }

    /// Embeds every entity's text through the gateway.
    pub fn embed_entities(&mut self, gateway: &Gateway, batch: usize) -> Result<(), KgError> {
        let texts: Vec<String> = self.entities.iter().map(Entity::text).collect();
        let vectors = gateway.embed_batched(&texts, batch)?;
        for (e, v) in self.entities.iter_mut().zip(vectors) {
            e.embedding = Some(v);
        }
        Ok(())
    }

    pub fn embeddings(&self) -> Result<Vec<&EmbeddingVector>, KgError> {
        self.entities
            .iter()
            .map(|e| e.embedding.as_ref().ok_or(KgError::MissingEmbedding(e.entity_id)))
            .collect()
    }

    /// Relations whose endpoints are both in `ids`.
    pub fn relations_among(&self, ids: &[u64]) -> Vec<&Relation> {
        let set: std::collections::HashSet<u64> = ids.iter().copied().collect();
        self.relations.iter().filter(|r| set.contains(&r.head) && set.contains(&r.tail)).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<(), KgError> {
        storage::write_jsonl(&dir.join(ENTITIES_FILE), &self.entities)?;
        storage::write_jsonl(&dir.join(RELATIONS_FILE), &self.relations)?;
        let vectors = self.embeddings()?;
        storage::write_vectors(&dir.join(ENTITY_VECTORS_FILE), vectors.iter().map(|v| v.values()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, KgError> {
        let mut entities: Vec<Entity> = storage::read_jsonl(&dir.join(ENTITIES_FILE))?;
        let relations: Vec<Relation> = storage::read_jsonl(&dir.join(RELATIONS_FILE))?;
        let vectors = storage::read_vectors(&dir.join(ENTITY_VECTORS_FILE), entities.len())?;
        for (e, v) in entities.iter_mut().zip(vectors) {
            e.embedding = Some(EmbeddingVector::from_normalized(v));
        }
        Self::new(entities, relations)
    }

    /// Entity id lookup by canonical name.
    pub fn name_index(&self) -> HashMap<&str, u64> {
        self.entities.iter().map(|e| (e.name.as_str(), e.entity_id)).collect()
    }
}
