//! Offline build stages and artifact loading for a work directory.
//!
//! Stages run in order: ingest (chunks), graph (extraction, merging,
//! entity embeddings), cluster (community hierarchy) and index. The build
//! manifest records, per stage, a key derived from its inputs and the
//! checksums of its outputs; a stage whose key and outputs still match is
//! skipped and its artifacts are loaded instead.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chnsw::{self, ChnswIndex};
use crate::config::RunConfig;
use crate::corpus_kg::{self, Chunk, KnowledgeGraph};
use crate::hier_cluster::{self, HierarchyTree};
use crate::llm_gateway::Gateway;
use crate::storage;

pub const BUILD_MANIFEST_FILE: &str = "build_manifest.json";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const INDEX_DIR: &str = "index";
const MANIFEST_VERSION: u32 = 1;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage {stage}: {source}")]
    Stage { stage: &'static str, source: BoxError },
    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
}

fn stage_err<E: Into<BoxError>>(stage: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, source: e.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    /// SHA-256 of each output, keyed by path relative to the work directory.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub version: u32,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Default for BuildManifest {
    fn default() -> Self {
        Self { version: MANIFEST_VERSION, stages: BTreeMap::new() }
    }
}

impl BuildManifest {
    pub fn load(workdir: &Path) -> Option<Self> {
        let bytes = std::fs::read(workdir.join(BUILD_MANIFEST_FILE)).ok()?;
        serde_json::from_slice::<Self>(&bytes).ok().filter(|m| m.version == MANIFEST_VERSION)
    }

    fn save(&self, workdir: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_string_pretty(self).map_err(stage_err("manifest"))?;
        std::fs::write(workdir.join(BUILD_MANIFEST_FILE), json + "\n").map_err(stage_err("manifest"))
    }

    /// True when the recorded stage has this key and its outputs are intact.
    fn is_fresh(&self, workdir: &Path, stage: &str, key: &str) -> bool {
        self.stages.get(stage).is_some_and(|r| {
            r.key == key
                && r.outputs.iter().all(|(rel, sum)| storage::sha256_file(&workdir.join(rel)).is_ok_and(|s| &s == sum))
        })
    }
}

fn key_of(parts: &[&str]) -> String {
    storage::sha256_hex(parts.join("\u{1f}").as_bytes())
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config sections serialize")
}

/// Files under `dir`, relative to `workdir`, sorted.
fn files_under(workdir: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.path());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            files_under(workdir, &p, out)?;
        } else {
            out.push(p.strip_prefix(workdir).expect("under workdir").to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

fn record(workdir: &Path, stage: &'static str, key: String, rels: &[String]) -> Result<StageRecord, PipelineError> {
    let mut outputs = BTreeMap::new();
    for rel in rels {
        outputs.insert(rel.clone(), storage::sha256_file(&workdir.join(rel)).map_err(stage_err(stage))?);
    }
    Ok(StageRecord { key, outputs })
}

/// Outcome of [`build`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuildSummary {
    pub chunks: usize,
    pub skipped_chunks: usize,
    pub entities: usize,
    pub relations: usize,
    pub community_layers: usize,
    pub index_layer_sizes: Vec<usize>,
    /// Stages skipped because their artifacts were current.
    pub reused_stages: Vec<&'static str>,
}

/// Runs every stage whose artifacts are missing or stale, writing the build
/// manifest after each completed stage so an interrupted build resumes.
pub fn build(config: &RunConfig, gateway: &Gateway) -> Result<BuildSummary, PipelineError> {
    let workdir = config.workdir.as_path();
    std::fs::create_dir_all(workdir).map_err(stage_err("setup"))?;
    let mut manifest = BuildManifest::load(workdir).unwrap_or_default();
    let mut reused = Vec::new();
    let mode = json(&config.gateway.mode);

    // ingest
    let corpus_sum = storage::sha256_file(&config.corpus.path).map_err(stage_err("ingest"))?;
    let ingest_key = key_of(&["ingest", &corpus_sum, &json(&config.corpus.chunk_size), &json(&config.corpus.overlap)]);
    let chunks_path = workdir.join(CHUNKS_FILE);
    let chunks: Vec<Chunk> = if manifest.is_fresh(workdir, "ingest", &ingest_key) {
        reused.push("ingest");
        storage::read_jsonl(&chunks_path).map_err(stage_err("ingest"))?
    } else {
        let docs = corpus_kg::read_corpus(&config.corpus.path).map_err(stage_err("ingest"))?;
        let chunks = corpus_kg::chunk_corpus(&docs, config.corpus.chunk_size, config.corpus.overlap)
            .map_err(stage_err("ingest"))?;
        storage::write_jsonl(&chunks_path, &chunks).map_err(stage_err("ingest"))?;
        let rec = record(workdir, "ingest", ingest_key.clone(), &[CHUNKS_FILE.to_string()])?;
        manifest.stages.insert("ingest".into(), rec);
        manifest.save(workdir)?;
        chunks
    };
    log::info!("ingest: {} chunks", chunks.len());

    // graph
    let fixtures_sum = match &config.gateway.fixtures {
        Some(p) => storage::sha256_file(p).map_err(stage_err("graph"))?,
        None => String::new(),
    };
    let gateway_key = key_of(&[&mode, &fixtures_sum, &json(&config.gateway.mock_dimension), &json(&config.seed)]);
    let graph_key = key_of(&["graph", &ingest_key, &gateway_key, &json(&config.hierarchy.embed_batch)]);
    let graph_files =
        [corpus_kg::ENTITIES_FILE, corpus_kg::RELATIONS_FILE, corpus_kg::ENTITY_VECTORS_FILE].map(String::from);
    let mut skipped_chunks = 0;
    let kg = if manifest.is_fresh(workdir, "graph", &graph_key) {
        reused.push("graph");
        KnowledgeGraph::load(workdir).map_err(stage_err("graph"))?
    } else {
        let (subgraphs, skipped) = corpus_kg::extract_all(gateway, &chunks);
        skipped_chunks = skipped;
        if skipped > 0 {
            log::warn!("extraction skipped {skipped} of {} chunks", chunks.len());
        }
        let mut kg = corpus_kg::merge_subgraphs(gateway, &subgraphs).map_err(stage_err("graph"))?;
        kg.embed_entities(gateway, config.hierarchy.embed_batch).map_err(stage_err("graph"))?;
        kg.save(workdir).map_err(stage_err("graph"))?;
        manifest.stages.insert("graph".into(), record(workdir, "graph", graph_key.clone(), &graph_files)?);
        manifest.save(workdir)?;
        kg
    };
    log::info!("graph: {} entities, {} relations", kg.len(), kg.relations.len());

    // cluster
    let cluster_key = key_of(&["cluster", &graph_key, &json(&config.hierarchy), &json(&config.seed)]);
    let cluster_files = [hier_cluster::COMMUNITIES_FILE, hier_cluster::COMMUNITY_VECTORS_FILE].map(String::from);
    let tree = if manifest.is_fresh(workdir, "cluster", &cluster_key) {
        reused.push("cluster");
        HierarchyTree::load(workdir, kg.len()).map_err(stage_err("cluster"))?
    } else {
        let tree = hier_cluster::hierarchical_cluster(gateway, &kg, &config.hierarchy_params())
            .map_err(stage_err("cluster"))?;
        tree.save(workdir).map_err(stage_err("cluster"))?;
        manifest.stages.insert("cluster".into(), record(workdir, "cluster", cluster_key.clone(), &cluster_files)?);
        manifest.save(workdir)?;
        tree
    };
    log::info!("cluster: {} community layers", tree.num_community_layers());

    // index
    let index_key = key_of(&["index", &cluster_key, &json(&config.index_params())]);
    let index_dir = workdir.join(INDEX_DIR);
    let index_layer_sizes = if manifest.is_fresh(workdir, "index", &index_key) {
        reused.push("index");
        chnsw::read_manifest(&index_dir).map_err(stage_err("index"))?.layer_sizes
    } else {
        let index = ChnswIndex::from_hierarchy(&tree, &kg, config.index_params()).map_err(stage_err("index"))?;
        if index_dir.exists() {
            std::fs::remove_dir_all(&index_dir).map_err(stage_err("index"))?;
        }
        chnsw::save_index(&index, &index_dir).map_err(stage_err("index"))?;
        let mut files = Vec::new();
        files_under(workdir, &index_dir, &mut files).map_err(stage_err("index"))?;
        manifest.stages.insert("index".into(), record(workdir, "index", index_key, &files)?);
        manifest.save(workdir)?;
        index.layers().iter().map(|l| l.len()).collect()
    };

    Ok(BuildSummary {
        chunks: chunks.len(),
        skipped_chunks,
        entities: kg.len(),
        relations: kg.relations.len(),
        community_layers: tree.num_community_layers(),
        index_layer_sizes,
        reused_stages: reused,
    })
}

/// Everything a query needs, loaded from a built work directory.
pub struct Artifacts {
    pub kg: KnowledgeGraph,
    pub tree: HierarchyTree,
    pub index: ChnswIndex,
}

impl Artifacts {
    pub fn load(workdir: &Path) -> Result<Self, PipelineError> {
        let required = [
            PathBuf::from(corpus_kg::ENTITIES_FILE),
            PathBuf::from(corpus_kg::RELATIONS_FILE),
            PathBuf::from(corpus_kg::ENTITY_VECTORS_FILE),
            PathBuf::from(hier_cluster::COMMUNITIES_FILE),
            PathBuf::from(hier_cluster::COMMUNITY_VECTORS_FILE),
            Path::new(INDEX_DIR).join(chnsw::MANIFEST_FILE),
        ];
        if let Some(missing) = required.iter().map(|r| workdir.join(r)).find(|p| !p.is_file()) {
            return Err(PipelineError::MissingArtifact(missing));
        }
        let kg = KnowledgeGraph::load(workdir).map_err(stage_err("load"))?;
        let tree = HierarchyTree::load(workdir, kg.len()).map_err(stage_err("load"))?;
        let index = chnsw::load_index(&workdir.join(INDEX_DIR)).map_err(|e| match e {
            chnsw::ChnswError::Storage(storage::StorageError::Io { path, source })
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                PipelineError::MissingArtifact(path)
            }
            e => PipelineError::Stage { stage: "load", source: e.into() },
        })?;
        Ok(Self { kg, tree, index })
    }
}
