//! Question answering over a built index: hierarchical retrieval, one
//! filter call per layer, then a single budgeted merge call.

mod filter;
mod merge;
mod retrieve;

pub use filter::{filter_prompt, filter_reports, parse_points, AnalysisReport, KeyPoint};
pub use merge::{merge_answer, merge_prompt, pack_points, rank_points, Answer, RankedPoint, DEFAULT_MERGE_BUDGET};
pub use retrieve::{render_subgraph, retrieve, Layer0Subgraph, LayerContext, RetrievalBundle};

use serde::{Deserialize, Serialize};

use crate::chnsw::{ChnswError, ChnswIndex};
use crate::corpus_kg::KnowledgeGraph;
use crate::hier_cluster::HierarchyTree;
use crate::llm_gateway::{Gateway, GatewayError};
use crate::prompts;

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Index(#[from] ChnswError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryParams {
    /// Results per layer.
    pub k: usize,
    pub merge_budget: usize,
    /// Token cap on each layer context sent to the filter.
    pub filter_budget: usize,
    pub response_format: String,
}

impl Default for QueryParams {
    fn default() -> Self {
        Self {
            k: 5,
            merge_budget: DEFAULT_MERGE_BUDGET,
            filter_budget: 8000,
            response_format: prompts::DEFAULT_RESPONSE_FORMAT.to_string(),
        }
    }
}

/// Loaded artifacts plus the gateway used to answer questions.
pub struct Engine<'a> {
    pub gateway: &'a Gateway,
    pub kg: &'a KnowledgeGraph,
    pub tree: &'a HierarchyTree,
    pub index: &'a ChnswIndex,
    pub params: QueryParams,
}

impl Engine<'_> {
    pub fn retrieve(&self, question: &str, k: usize) -> Result<RetrievalBundle, QueryError> {
        retrieve(self.gateway, self.index, self.kg, self.tree, question, k)
    }

    pub fn answer_question(&self, question: &str, k: usize) -> Result<Answer, QueryError> {
        let bundle = self.retrieve(question, k)?;
        let (reports, filter_usage) = filter_reports(self.gateway, question, &bundle, self.params.filter_budget);
        let mut answer =
            merge_answer(self.gateway, question, &reports, self.params.merge_budget, &self.params.response_format)?;
        answer.usage += filter_usage;
        Ok(answer)
    }
}
