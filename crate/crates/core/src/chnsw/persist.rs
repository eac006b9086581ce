use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::LayerGraph;
use super::{ChnswError, ChnswIndex, ChnswParams};
use crate::storage::{self, StorageError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const INTER_FILE: &str = "inter.bin";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub version: u32,
    pub num_layers: usize,
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
    pub dimension: usize,
    pub metric: String,
    pub layer_sizes: Vec<usize>,
    /// SHA-256 of every data file, keyed by path relative to the index dir.
    pub checksums: BTreeMap<String, String>,
}

fn layer_file(layer: usize, name: &str) -> String {
    format!("layer_{layer}/{name}")
}

fn write_file(dir: &Path, rel: &str, bytes: &[u8], sums: &mut BTreeMap<String, String>) -> Result<(), ChnswError> {
    let path = dir.join(rel);
    let mut w = storage::create(&path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| StorageError::io(&path, e))?;
    sums.insert(rel.to_string(), storage::sha256_hex(bytes));
    Ok(())
}

pub fn save_index(index: &ChnswIndex, dir: &Path) -> Result<(), ChnswError> {
    let mut sums = BTreeMap::new();
    for (i, layer) in index.layers.iter().enumerate() {
        let nodes: Vec<u8> = layer.node_ids.iter().flat_map(|id| id.to_le_bytes()).collect();
        write_file(dir, &layer_file(i, "nodes.bin"), &nodes, &mut sums)?;
        let vectors: Vec<u8> = layer.vectors.iter().flat_map(|x| x.to_le_bytes()).collect();
        write_file(dir, &layer_file(i, "vectors.bin"), &vectors, &mut sums)?;
        let mut adj = Vec::new();
        for list in &layer.adjacency {
            adj.extend_from_slice(&(list.len() as u32).to_le_bytes());
            for &v in list {
                adj.extend_from_slice(&layer.node_ids[v as usize].to_le_bytes());
            }
        }
        write_file(dir, &layer_file(i, "adj.bin"), &adj, &mut sums)?;
    }
    let mut inter = Vec::new();
    for i in 1..index.layers.len() {
        for (local, &target) in index.inter[i].iter().enumerate() {
            inter.extend_from_slice(&(i as u32).to_le_bytes());
            inter.extend_from_slice(&index.layers[i].node_ids[local].to_le_bytes());
            inter.extend_from_slice(&index.layers[i - 1].node_ids[target as usize].to_le_bytes());
        }
    }
    write_file(dir, INTER_FILE, &inter, &mut sums)?;
    let p = &index.params;
    let manifest = IndexManifest {
        version: FORMAT_VERSION,
        num_layers: index.layers.len(),
        m: p.m,
        ef_construction: p.ef_construction,
        ef_search: p.ef_search,
        seed: p.seed,
        dimension: index.dimension(),
        metric: "inner_product".into(),
        layer_sizes: index.layers.iter().map(LayerGraph::len).collect(),
        checksums: sums,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| StorageError::format(&path, e.to_string()))?;
    let mut w = storage::create(&path)?;
    w.write_all(&json).and_then(|_| w.flush()).map_err(|e| StorageError::io(&path, e))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    name: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ChnswError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ChnswError::CorruptIndex(format!("{} is truncated", self.name)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ChnswError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ChnswError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32, ChnswError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn finish(&self) -> Result<(), ChnswError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(ChnswError::CorruptIndex(format!("{} has trailing bytes", self.name)))
        }
    }
}

pub fn read_manifest(dir: &Path) -> Result<IndexManifest, ChnswError> {
    let path = dir.join(MANIFEST_FILE);
    let bytes = storage::read_bytes(&path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| ChnswError::CorruptIndex(format!("manifest: {e}")))?;
    let version = value.get("version").and_then(serde_json::Value::as_u64);
    match version {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => return Err(ChnswError::VersionMismatch { expected: FORMAT_VERSION, found: v }),
        None => return Err(ChnswError::CorruptIndex("manifest has no version".into())),
    }
    serde_json::from_value(value).map_err(|e| ChnswError::CorruptIndex(format!("manifest: {e}")))
}

fn checked_bytes(dir: &Path, manifest: &IndexManifest, rel: &str) -> Result<Vec<u8>, ChnswError> {
    let expected = manifest
        .checksums
        .get(rel)
        .ok_or_else(|| ChnswError::CorruptIndex(format!("manifest lacks a checksum for {rel}")))?;
    let bytes = std::fs::read(dir.join(rel)).map_err(|e| ChnswError::CorruptIndex(format!("{rel}: {e}")))?;
    if &storage::sha256_hex(&bytes) != expected {
        return Err(ChnswError::CorruptIndex(format!("checksum mismatch in {rel}")));
    }
    Ok(bytes)
}

pub fn load_index(dir: &Path) -> Result<ChnswIndex, ChnswError> {
    let manifest = read_manifest(dir)?;
    let d = manifest.dimension;
    if manifest.num_layers == 0 || manifest.layer_sizes.len() != manifest.num_layers || d == 0 {
        return Err(ChnswError::CorruptIndex("manifest layer table is inconsistent".into()));
    }
    let mut layers = Vec::with_capacity(manifest.num_layers);
    for (i, &n) in manifest.layer_sizes.iter().enumerate() {
        let rel = layer_file(i, "nodes.bin");
        let bytes = checked_bytes(dir, &manifest, &rel)?;
        let mut r = Reader { bytes: &bytes, pos: 0, name: &rel };
        let node_ids = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        if node_ids.is_empty() || node_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ChnswError::CorruptIndex(format!("{rel} is not sorted and unique")));
        }

        let rel = layer_file(i, "vectors.bin");
        let bytes = checked_bytes(dir, &manifest, &rel)?;
        let mut r = Reader { bytes: &bytes, pos: 0, name: &rel };
        let vectors = (0..n * d).map(|_| r.f32()).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;

        let mut layer = LayerGraph { layer_index: i, node_ids, dimension: d, vectors, adjacency: Vec::new() };
        let rel = layer_file(i, "adj.bin");
        let bytes = checked_bytes(dir, &manifest, &rel)?;
        let mut r = Reader { bytes: &bytes, pos: 0, name: &rel };
        let mut adjacency = Vec::with_capacity(n);
        for _ in 0..n {
            let deg = r.u32()? as usize;
            let mut list = Vec::with_capacity(deg.min(n));
            for _ in 0..deg {
                let id = r.u64()?;
                let local = layer
                    .position(id)
                    .ok_or_else(|| ChnswError::CorruptIndex(format!("{rel} names unknown node {id}")))?;
                list.push(local as u32);
            }
            adjacency.push(list);
        }
        r.finish()?;
        layer.adjacency = adjacency;
        layers.push(layer);
    }

    let bytes = checked_bytes(dir, &manifest, INTER_FILE)?;
    let mut r = Reader { bytes: &bytes, pos: 0, name: INTER_FILE };
    let mut inter: Vec<Vec<Option<u32>>> = layers.iter().map(|l| vec![None; if l.layer_index == 0 { 0 } else { l.len() }]).collect();
    while r.pos < bytes.len() {
        let layer = r.u32()? as usize;
        let id = r.u64()?;
        let target = r.u64()?;
        let bad = || ChnswError::CorruptIndex(format!("{INTER_FILE} has a bad link {layer}:{id}->{target}"));
        if layer == 0 || layer >= layers.len() {
            return Err(bad());
        }
        let local = layers[layer].position(id).ok_or_else(bad)?;
        let t = layers[layer - 1].position(target).ok_or_else(bad)?;
        inter[layer][local] = Some(t as u32);
    }
    let inter = inter
        .into_iter()
        .enumerate()
        .map(|(i, links)| {
            links
                .into_iter()
                .collect::<Option<Vec<u32>>>()
                .ok_or_else(|| ChnswError::CorruptIndex(format!("layer {i} has nodes without a downward link")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let params = ChnswParams {
        m: manifest.m,
        ef_construction: manifest.ef_construction,
        ef_search: manifest.ef_search,
        seed: manifest.seed,
    };
    Ok(ChnswIndex { layers, inter, params })
}
