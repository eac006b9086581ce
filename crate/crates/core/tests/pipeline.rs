mod common;

use std::path::Path;

use common::*;
use strata_core::pipeline::{self, Artifacts, PipelineError, BUILD_MANIFEST_FILE, CHUNKS_FILE};

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn build_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let s = pipeline::build(&config, &mock_gateway(&config)).unwrap();
    assert_eq!(s.skipped_chunks, 0);
    assert!(s.entities > 0 && s.relations > 0);
    assert_eq!(s.index_layer_sizes.len(), s.community_layers + 1);
    assert_eq!(s.index_layer_sizes[0], s.entities);
    assert!(s.index_layer_sizes.windows(2).all(|w| w[0] > w[1]));
    for f in [BUILD_MANIFEST_FILE, CHUNKS_FILE] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let a = Artifacts::load(dir.path()).unwrap();
    assert_eq!(a.kg.len(), s.entities);
    assert_eq!(a.index.layers().iter().map(|l| l.len()).collect::<Vec<_>>(), s.index_layer_sizes);
}

#[test]
fn rerun_reuses_stages_and_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    let first = pipeline::build(&config, &mock_gateway(&config)).unwrap();
    let before = snapshot(dir.path());
    let gateway = mock_gateway(&config);
    let second = pipeline::build(&config, &gateway).unwrap();
    assert_eq!(second.reused_stages, ["ingest", "graph", "cluster", "index"]);
    assert_eq!(gateway.stats().chat_calls, 0);
    assert_eq!(first.index_layer_sizes, second.index_layer_sizes);
    assert_eq!(before, snapshot(dir.path()));

    let other = tempfile::tempdir().unwrap();
    let config2 = fixture_config(other.path());
    pipeline::build(&config2, &mock_gateway(&config2)).unwrap();
    assert_eq!(before, snapshot(other.path()));
}

#[test]
fn tampered_artifact_reruns_its_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path());
    pipeline::build(&config, &mock_gateway(&config)).unwrap();
    let before = snapshot(dir.path());
    let index_manifest = dir.path().join("index").join("manifest.json");
    std::fs::write(&index_manifest, b"{}").unwrap();
    let s = pipeline::build(&config, &mock_gateway(&config)).unwrap();
    assert_eq!(s.reused_stages, ["ingest", "graph", "cluster"]);
    assert_eq!(before, snapshot(dir.path()));
}

#[test]
fn unreadable_corpus_fails_in_ingest() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path());
    config.corpus.path = dir.path().join("absent.jsonl");
    let err = pipeline::build(&config, &mock_gateway(&config)).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { stage: "ingest", .. }), "{err}");
    assert!(err.to_string().contains("ingest"));
}

#[test]
fn loading_an_empty_workdir_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    match Artifacts::load(dir.path()) {
        Err(PipelineError::MissingArtifact(p)) => assert!(p.starts_with(dir.path())),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("loaded from an empty directory"),
    }
}
