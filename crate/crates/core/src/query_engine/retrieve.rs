use serde::Serialize;

use super::QueryError;
use crate::chnsw::ChnswIndex;
use crate::corpus_kg::KnowledgeGraph;
use crate::hier_cluster::HierarchyTree;
use crate::llm_gateway::Gateway;

/// Retrieved nodes of one layer and their rendered text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerContext {
    pub layer: usize,
    /// Node ids in rank order.
    pub ids: Vec<u64>,
    pub context: String,
}

/// Retrieved entities with the knowledge-graph relations among them.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Layer0Subgraph {
    pub entities: Vec<u64>,
    pub relations: Vec<u64>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalBundle {
    /// One context per index layer, bottom first.
    pub per_layer: Vec<LayerContext>,
    pub layer0_subgraph: Layer0Subgraph,
}

/// Entity lines followed by relation lines among the given entities.
pub fn render_subgraph(kg: &KnowledgeGraph, ids: &[u64]) -> Layer0Subgraph {
    let mut lines: Vec<String> = ids
        .iter()
        .filter_map(|&id| kg.entities.get(id as usize))
        .map(|e| e.text())
        .collect();
    let relations = kg.relations_among(ids);
    if !relations.is_empty() {
        lines.push(String::new());
        lines.push("Relations:".into());
        for r in &relations {
            let name = |id: u64| kg.entities[id as usize].name.as_str();
            if r.description.is_empty() {
                lines.push(format!("{} -> {}", name(r.head), name(r.tail)));
            } else {
                lines.push(format!("{} -> {}: {}", name(r.head), name(r.tail), r.description));
            }
        }
    }
    Layer0Subgraph {
        entities: ids.to_vec(),
        relations: relations.iter().map(|r| r.relation_id).collect(),
        text: lines.join("\n"),
    }
}

/// Embeds the question, searches every layer and renders the contexts:
/// community summaries above layer 0, the entity subgraph at layer 0.
pub fn retrieve(
    gateway: &Gateway,
    index: &ChnswIndex,
    kg: &KnowledgeGraph,
    tree: &HierarchyTree,
    question: &str,
    k: usize,
) -> Result<RetrievalBundle, QueryError> {
    if question.trim().is_empty() {
        return Err(QueryError::EmptyQuestion);
    }
    if k == 0 {
        return Err(QueryError::InvalidParameter("k must be >= 1".into()));
    }
    let q = gateway.embed(&[question.to_string()])?.remove(0);
    let result = index.hierarchical_search(q.values(), k)?;
    let mut per_layer: Vec<LayerContext> = Vec::with_capacity(result.per_layer.len());
    let mut layer0_subgraph = Layer0Subgraph::default();
    for hits in result.per_layer.iter().rev() {
        let ids: Vec<u64> = hits.hits.iter().map(|(id, _)| *id).collect();
        let context = if hits.layer == 0 {
            layer0_subgraph = render_subgraph(kg, &ids);
            layer0_subgraph.text.clone()
        } else {
            ids.iter()
                .filter_map(|&id| tree.community(id))
                .map(|c| c.summary.clone())
                .collect::<Vec<_>>()
                .join("\n")
        };
        per_layer.push(LayerContext { layer: hits.layer, ids, context });
    }
    Ok(RetrievalBundle { per_layer, layer0_subgraph })
}
