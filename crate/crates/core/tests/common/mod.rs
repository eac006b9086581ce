#![allow(dead_code)]

use std::path::{Path, PathBuf};

use strata_core::config::RunConfig;
use strata_core::llm_gateway::{Gateway, MockBackend};
use strata_core::pipeline::{self, Artifacts};
use strata_core::query_engine::{Engine, QueryParams};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub const CASE_QUESTION: &str = "Who is the individual associated with generative AI technology that was reportedly ousted from a leading AI organization, but is recognized for brilliance and generosity in the industry, and is currently planning to launch a new venture according to reports from TechCrunch and Fortune?";

pub fn fixture_config(workdir: &Path) -> RunConfig {
    let mut config = RunConfig::load(&fixture("config.toml")).expect("fixture config");
    config.workdir = workdir.to_path_buf();
    config
}

pub fn mock_gateway(config: &RunConfig) -> Gateway {
    config.gateway().expect("mock gateway")
}

/// Builds the fixture corpus into `workdir` and loads the artifacts.
pub fn build_fixture(workdir: &Path) -> (RunConfig, Artifacts) {
    let config = fixture_config(workdir);
    pipeline::build(&config, &mock_gateway(&config)).expect("fixture build");
    let artifacts = Artifacts::load(workdir).expect("artifacts");
    (config, artifacts)
}

pub fn engine<'a>(gateway: &'a Gateway, a: &'a Artifacts) -> Engine<'a> {
    Engine { gateway, kg: &a.kg, tree: &a.tree, index: &a.index, params: QueryParams::default() }
}

pub fn plain_mock() -> Gateway {
    Gateway::mock(MockBackend::default())
}
