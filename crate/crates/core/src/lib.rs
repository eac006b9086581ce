//! Hierarchical attributed-community retrieval engine.
//!
//! Offline, a corpus becomes a knowledge graph ([`corpus_kg`]), the graph is
//! clustered into a hierarchy of summarized communities ([`hier_cluster`]),
//! and every entity and community is indexed in one multi-layer proximity
//! graph ([`chnsw`]). Online, [`query_engine`] searches all layers at once and
//! answers through per-layer filtering and a score-ordered merge.
//! [`evalbench`] holds the metrics, the synthetic benchmark and the
//! per-layer HNSW baseline.

pub mod llm_gateway;
pub mod prompts;
pub mod text;
pub mod storage;
pub mod corpus_kg;
pub mod hier_cluster;
pub mod chnsw;
pub mod query_engine;
pub mod evalbench;
pub mod config;
pub mod pipeline;
