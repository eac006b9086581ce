//! Run configuration, read from a TOML file with sections.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chnsw::ChnswParams;
use crate::evalbench::BenchConfig;
use crate::hier_cluster::{ClusterBackend, HierarchyParams, KnnAugmenter, WeightPolicy};
use crate::llm_gateway::{Backend, Gateway, GatewayConfig, GatewayError, LiveBackend, LiveConfig, MockBackend, DEFAULT_MOCK_DIMENSION};
use crate::query_engine::QueryParams;

/// Environment variable holding the live backend credential.
pub const API_KEY_ENV: &str = "STRATA_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { path: PathBuf::from("corpus.jsonl"), chunk_size: 1200, overlap: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HierarchySection {
    pub max_layers: usize,
    pub min_nodes: usize,
    /// Neighbours per node for graph augmentation; unset picks the mean degree.
    pub knn_k: Option<usize>,
    pub similarity_floor: f32,
    pub weight_policy: WeightPolicy,
    pub backend: ClusterBackend,
    pub resolution: f64,
    pub embed_batch: usize,
}

impl Default for HierarchySection {
    fn default() -> Self {
        let p = HierarchyParams::default();
        Self {
            max_layers: p.max_layers,
            min_nodes: p.min_nodes,
            knn_k: p.augmenter.k,
            similarity_floor: p.augmenter.similarity_floor,
            weight_policy: p.weight_policy,
            backend: p.backend,
            resolution: p.resolution,
            embed_batch: p.embed_batch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub mode: GatewayMode,
    pub endpoint: String,
    pub chat_model: String,
    pub embedding_model: String,
    pub timeout_secs: u64,
    pub attempts: u32,
    pub max_in_flight: usize,
    pub token_budget: Option<u64>,
    /// JSON file of canned mock responses.
    pub fixtures: Option<PathBuf>,
    pub mock_dimension: usize,
}

impl Default for GatewaySection {
    fn default() -> Self {
        let g = GatewayConfig::default();
        Self {
            mode: GatewayMode::Mock,
            endpoint: "https://api.openai.com/v1".into(),
            chat_model: "gpt-4o-mini".into(),
            embedding_model: "text-embedding-3-small".into(),
            timeout_secs: 120,
            attempts: g.attempts,
            max_in_flight: g.max_in_flight,
            token_budget: g.token_budget,
            fixtures: None,
            mock_dimension: DEFAULT_MOCK_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub seed: u64,
    pub corpus: CorpusSection,
    pub hierarchy: HierarchySection,
    pub index: ChnswParams,
    pub query: QueryParams,
    pub gateway: GatewaySection,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.workdir);
        resolve(&mut config.corpus.path);
        if let Some(f) = config.gateway.fixtures.as_mut() {
            resolve(f);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let c = &self.corpus;
        if c.chunk_size == 0 || c.overlap >= c.chunk_size {
            return bad(format!("chunking needs chunk_size > overlap >= 0 (got {}, {})", c.chunk_size, c.overlap));
        }
        let h = &self.hierarchy;
        if h.max_layers == 0 {
            return bad("hierarchy.max_layers must be >= 1".into());
        }
        if h.knn_k == Some(0) {
            return bad("hierarchy.knn_k must be >= 1".into());
        }
        if !(h.resolution.is_finite() && h.resolution > 0.0) {
            return bad("hierarchy.resolution must be positive".into());
        }
        if !(-1.0..=1.0).contains(&h.similarity_floor) {
            return bad("hierarchy.similarity_floor must lie in [-1, 1]".into());
        }
        if h.embed_batch == 0 {
            return bad("hierarchy.embed_batch must be >= 1".into());
        }
        self.index.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let q = &self.query;
        if q.k == 0 || q.merge_budget == 0 || q.filter_budget == 0 {
            return bad("query.k, query.merge_budget and query.filter_budget must be >= 1".into());
        }
        let g = &self.gateway;
        if g.attempts == 0 || g.max_in_flight == 0 || g.mock_dimension == 0 {
            return bad("gateway.attempts, gateway.max_in_flight and gateway.mock_dimension must be >= 1".into());
        }
        self.bench.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn hierarchy_params(&self) -> HierarchyParams {
        let h = &self.hierarchy;
        HierarchyParams {
            max_layers: h.max_layers,
            min_nodes: h.min_nodes,
            augmenter: KnnAugmenter { k: h.knn_k, similarity_floor: h.similarity_floor },
            weight_policy: h.weight_policy,
            backend: h.backend,
            resolution: h.resolution,
            seed: self.seed,
            embed_batch: h.embed_batch,
        }
    }

    pub fn index_params(&self) -> ChnswParams {
        ChnswParams { seed: self.seed, ..self.index }
    }

    /// The configured gateway. Live mode reads the credential from
    /// [`API_KEY_ENV`].
    pub fn gateway(&self) -> Result<Gateway, GatewayError> {
        let g = &self.gateway;
        let backend: Box<dyn Backend> = match g.mode {
            GatewayMode::Mock => {
                let mut mock = MockBackend::new(g.mock_dimension, self.seed);
                if let Some(path) = &g.fixtures {
                    mock = mock.with_fixtures(MockBackend::load_fixtures(path)?);
                }
                Box::new(mock)
            }
            GatewayMode::Live => Box::new(LiveBackend::new(LiveConfig {
                endpoint: g.endpoint.clone(),
                api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
                chat_model: g.chat_model.clone(),
                embedding_model: g.embedding_model.clone(),
                timeout: Duration::from_secs(g.timeout_secs),
            })),
        };
        let config = GatewayConfig {
            attempts: g.attempts,
            max_in_flight: g.max_in_flight,
            token_budget: g.token_budget,
            ..GatewayConfig::default()
        };
        Ok(Gateway::new(backend, config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_sections() {
        let c = RunConfig::from_toml(
            "seed = 7\n[corpus]\nchunk_size = 300\noverlap = 20\n[index]\nm = 8\n[hierarchy]\nweight_policy = \"distance\"\n[gateway]\nmode = \"live\"\n",
        )
        .unwrap();
        assert_eq!((c.seed, c.corpus.chunk_size, c.corpus.overlap), (7, 300, 20));
        assert_eq!((c.index.m, c.index.ef_search), (8, 100));
        assert_eq!(c.hierarchy.weight_policy, WeightPolicy::Distance);
        assert_eq!(c.gateway.mode, GatewayMode::Live);
        assert_eq!(c.query.k, 5);
        assert_eq!(c.index_params().seed, 7);
        assert_eq!(c.hierarchy_params().seed, 7);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(matches!(RunConfig::from_toml("[corpus]\nchunk_size = 10\noverlap = 10"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml("[index]\nm = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml("[gateway]\nmode = \"remote\""), Err(ConfigError::Parse(_))));
    }
}
